"""
Run Summary
Machine-readable records of a run: per-chain acceptance, wall time and a
content hash of the configuration and inputs
"""

import hashlib
import json
import logging
import os
from datetime import datetime
from typing import Any, Dict, Iterable, List, Optional

import numpy as np

from processing.model import VARIANT_LABELS, HierarchicalModel
from processing.samplers import PosteriorSamples

logger = logging.getLogger(__name__)

SUMMARY_VERSION = '1'


def hash_inputs(paths: Iterable[str], config_text: str = '') -> str:
    """sha256 over the config text and the bytes of every input file, in the given order"""
    digest = hashlib.sha256()
    digest.update(config_text.encode('utf-8'))
    for path in paths:
        digest.update(os.path.basename(path).encode('utf-8'))
        with open(path, 'rb') as fh:
            for chunk in iter(lambda: fh.read(1 << 16), b''):
                digest.update(chunk)
    return digest.hexdigest()


def build_run_summary(samples: PosteriorSamples, model: HierarchicalModel, content_hash: str,
                      model_id: Optional[str] = None) -> List[Dict[str, Any]]:
    """One record per chain followed by one record for the run"""
    rates = samples.acceptance_rates()
    records = []
    for chain, rate in enumerate(rates):
        records.append({
            'record': 'chain',
            'chain': chain,
            'hmc_acceptance': float(rate),
            'final_step_size': float(samples.step_size[chain]) if samples.step_size.size else None,
            'retained_draws': int(np.sum(samples.chain == chain)),
        })
    records.append({
        'record': 'run',
        'summary_version': SUMMARY_VERSION,
        'export_date': datetime.now().isoformat(),
        'model': model_id or f'variant{model.variant}',
        'variant': model.variant,
        'variant_label': VARIANT_LABELS[model.variant],
        'chains': int(rates.size),
        'retained_draws': samples.n_draws,
        'mean_hmc_acceptance': float(rates.mean()) if rates.size else None,
        'wall_time_s': round(float(samples.wall_time), 3),
        'content_hash': content_hash,
    })
    return records


def write_run_summary(records: Iterable[Dict[str, Any]], output_path: str) -> str:
    """Write records as JSON lines"""
    directory = os.path.dirname(output_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    records = list(records)
    with open(output_path, 'w', encoding='utf-8', newline='\n') as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + '\n')
    logger.info(f"Run summary ({len(records)} records) written to {output_path}")
    return output_path


def read_run_summary(path: str) -> List[Dict[str, Any]]:
    with open(path, 'r', encoding='utf-8') as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_manifest(resolved_config: Dict[str, Any], outputs: Dict[str, str], output_path: str) -> str:
    """Echo of the resolved configuration and the files a command wrote"""
    manifest = {
        'metadata': {'summary_version': SUMMARY_VERSION, 'platform': 'fluxinv'},
        'config': resolved_config,
        'outputs': {k: os.path.basename(v) for k, v in sorted(outputs.items())},
    }
    with open(output_path, 'w', encoding='utf-8', newline='\n') as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write('\n')
    logger.info(f"Manifest written to {output_path}")
    return output_path
