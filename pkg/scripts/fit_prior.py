"""Fit the shipped pose prior: an 8-component diagonal GMM over body-pose angles.

Training poses are drawn around a handful of hand-built poses (rest, arms down,
handshake, hug, one arm raised) with per-joint Gaussian jitter. Writes
src/contactrefine/data/gmm_prior.json.

    python scripts/fit_prior.py [--samples 6000] [--jitter 0.15]
"""
import argparse
from pathlib import Path

import numpy as np
from sklearn.mixture import GaussianMixture

from contactrefine import scene
from contactrefine.refine import GmmPrior

OUT = Path(__file__).resolve().parents[1] / "src" / "contactrefine" / "data" / "gmm_prior.json"


def base_poses():
    raised = np.zeros((24, 3))
    raised[16] = scene._rotvec_between([1, 0, 0], [0.2, 1, 0])
    return [
        np.zeros((24, 3)),
        scene._arms_down(np.zeros((24, 3))),
        scene._handshake_pose(10).theta,
        scene._hug_pose(10).theta,
        scene._arms_down(np.zeros((24, 3))) + raised,
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=6000)
    ap.add_argument("--jitter", type=float, default=0.15)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=OUT)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    bases = np.stack([b[1:].ravel() for b in base_poses()])
    pick = rng.integers(len(bases), size=args.samples)
    x = bases[pick] + args.jitter * rng.standard_normal((args.samples, bases.shape[1]))

    gmm = GaussianMixture(8, covariance_type="diag", random_state=args.seed, reg_covar=1e-4)
    gmm.fit(x)
    weights = gmm.weights_ / gmm.weights_.sum()
    prior = GmmPrior(weights, gmm.means_, gmm.covariances_)
    prior.save(args.out)
    print(f"wrote {args.out} (K={len(weights)}, d={prior.dim}, mean NLL "
          f"{-gmm.score(x):.3f})")


if __name__ == "__main__":
    main()
