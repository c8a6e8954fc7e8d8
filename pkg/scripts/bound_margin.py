"""Regret against the closed-form bound at epoch boundaries, past the 10-epoch window.

Exploration costs gamma * M steps per epoch, so at desk scale both T and the
regret grow about linearly in the epoch index while the bound grows with log T.
This script shows where the two meet for a given config.
"""
import argparse
from dataclasses import replace

from mumab.config import load
from mumab.harness import run_episode, theoretical_bound


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/k10m10.json")
    ap.add_argument("--epochs", type=int, default=16)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    _, run_cfg = load(args.config)
    run_cfg = replace(run_cfg, epochs=args.epochs, steps=None)
    res = run_episode(run_cfg, args.seed)
    print(f"delta={res.params.delta:.5g} gamma={res.params.gamma} ell_f={res.stats.ell_f}")
    print(f"{'epoch':>5} {'T':>9} {'regret':>11} {'bound':>11} {'ratio':>6}")
    for ell, t, regret in res.stats.boundaries:
        bound = theoretical_bound(res.params, t)
        print(f"{ell:>5} {t:>9} {regret:>11.1f} {bound:>11.1f} {regret / bound:>6.3f}")


if __name__ == "__main__":
    main()
