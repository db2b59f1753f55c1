#!/usr/bin/env python3
"""
Simulate a step log from known AFM parameters.

Produces the `student_id,skill,opportunity,correct` CSV that `ffsim fit`
reads, which makes a generate-then-fit round trip possible without real data.
"""

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import argparse
import logging

from ffsim.schemas import AfmParamsFile
from ffsim.services.afm_student import load_afm_params, params_from_document
from ffsim.services.skill_pool import load_pool_file
from ffsim.services.step_log import accuracy_curves, generate_step_log, write_step_log
from ffsim.utils.random_streams import FIXTURE_STREAM, derive_stream

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


def main():
    parser = argparse.ArgumentParser(description="Generate a synthetic AFM step log")
    parser.add_argument("--params", required=True, help="AFM parameters JSON")
    parser.add_argument("--pool", default=None, help="Pool file fixing the skill order (default: order in the params file)")
    parser.add_argument("--students", type=int, default=200)
    parser.add_argument("--steps", type=int, default=300, help="Steps per student")
    parser.add_argument("--seed", type=int, default=20250101)
    parser.add_argument("--out", required=True)
    args = parser.parse_args()

    if args.pool:
        skill_model, _ = load_pool_file(args.pool)
        params = load_afm_params(args.params, skill_model)
    else:
        with open(args.params, encoding="utf-8") as handle:
            document = AfmParamsFile.model_validate_json(handle.read())
        params = params_from_document(document, tuple(document.skills))

    rng = derive_stream(args.seed, FIXTURE_STREAM)
    thetas = rng.normal(params.theta_mean, params.theta_sd, size=args.students)
    log = generate_step_log(params, thetas, args.steps, rng)
    write_step_log(log, args.out)

    logger.info(f"✅ Wrote {len(log)} rows for {log.n_students} students to {args.out}")
    curves = accuracy_curves(log, max_opportunity=0)
    for row in curves.itertuples(index=False):
        logger.info(f"   {row.skill:<24} first-opportunity accuracy {row.accuracy:.3f}")


if __name__ == "__main__":
    main()
