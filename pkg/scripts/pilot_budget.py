#!/usr/bin/env python3
"""
Pilot run for the fixed-budget experiment.

Simulates MasteryHard without Fast-Forwarding to mastery and prints the
median steps_to_mastery, the value to pin as `budget` in a budget-regime
config.
"""

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import argparse
import logging

import numpy as np

from ffsim.services.experiment_config import validate_config
from ffsim.services.experiment_runner import pilot_steps_to_mastery

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


def main():
    parser = argparse.ArgumentParser(description="Median steps to mastery for MasteryHard without FF")
    parser.add_argument("--config", required=True, help="Config naming the pool and AFM parameters")
    parser.add_argument("--n-students", type=int, default=10000)
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args()

    config = validate_config(args.config, {"n_students": args.n_students})
    steps = pilot_steps_to_mastery(config, args.n_students, jobs=args.jobs)

    logger.info(f"✅ {len(steps)} students reached mastery")
    logger.info(f"   median steps_to_mastery: {int(np.median(steps))}")
    logger.info(f"   quartiles: {np.percentile(steps, 25):.0f} / {np.percentile(steps, 75):.0f}")
    if config.budget is not None:
        logger.info(f"   configured budget: {config.budget}")


if __name__ == "__main__":
    main()
