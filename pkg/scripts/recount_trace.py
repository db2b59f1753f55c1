#!/usr/bin/env python3
"""
Recount overpractice from a trace.csv and compare it with students.csv.

Replays BKT along every traced session, checks that no fast-forwarded step
skipped an unmastered skill, and reports any student whose recounted metrics
differ from the ones written during the run.
"""

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import argparse
import logging

import pandas as pd

from ffsim.services.experiment_config import build_bkt_params, validate_config
from ffsim.services.metrics import metrics_from_trace, verify_ff_safety
from ffsim.services.skill_pool import load_pool_file

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


def main():
    parser = argparse.ArgumentParser(description="Replay a trace and recount per-student metrics")
    parser.add_argument("--config", required=True, help="The experiment config the run used")
    parser.add_argument("--results", required=True, help="Output directory holding trace.csv and students.csv")
    args = parser.parse_args()

    config = validate_config(args.config)
    skill_model, _ = load_pool_file(config.pool_path)
    bkt_params = build_bkt_params(config, skill_model)

    trace = pd.read_csv(os.path.join(args.results, "trace.csv"))
    students = pd.read_csv(os.path.join(args.results, "students.csv"))

    unsafe = verify_ff_safety(trace)
    if unsafe:
        logger.error(f"❌ {unsafe} fast-forwarded step(s) skipped an unmastered skill")
    else:
        logger.info("✅ Every fast-forwarded step exercised a mastered skill")

    recounted = metrics_from_trace(trace, skill_model, bkt_params)
    mismatches = 0
    for row in students.itertuples(index=False):
        metrics = recounted.get((row.selector, bool(row.ff), int(row.student)))
        if metrics is None:
            continue
        if (metrics.overpractice_total, metrics.underpractice, metrics.attempted_steps) != (
            row.overpractice_total,
            row.underpractice,
            row.attempted_steps,
        ):
            mismatches += 1
            logger.error(f"❌ Student {row.student} ({row.selector}, ff={row.ff}) recounts differently")

    logger.info(f"Recounted {len(recounted)} session(s); {mismatches} mismatch(es)")
    sys.exit(1 if mismatches or unsafe else 0)


if __name__ == "__main__":
    main()
