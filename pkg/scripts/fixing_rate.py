"""Empirical all-fixed rate of one fixing phase against 1 - K exp(-T_f / M).

Each trial runs the fixing phase followed by verification for K fresh agents;
a trial succeeds when every agent's verdict is positive.
"""
import argparse
import math
import random

from mumab.agent import Agent, ProtocolParams
from mumab.env import ChannelEnvironment, ChannelModel
from mumab.harness import lockstep
from mumab.matching import MeanMatrix


def trial(params, rng, env):
    agents = [Agent(params, random.Random(rng.getrandbits(64)), program=iter(())) for _ in range(params.k)]

    def program(a):
        yield from a.fixing()
        return (yield from a.verify())

    for a in agents:
        a.start(program(a))
    lockstep(agents, env)
    return all(a.result for a in agents)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("-k", type=int, default=10)
    ap.add_argument("-m", type=int, default=10)
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    k, m = args.k, args.m
    env = ChannelEnvironment(ChannelModel(MeanMatrix([[0.5] * m] * k)), 0)
    default = math.ceil(m * math.log(20 * k))
    print(f"K={k} M={m} trials={args.trials}; default T_f={default}")
    print(f"{'T_f':>5} {'empirical':>10} {'stderr':>8} {'1-K e^(-T_f/M)':>15}")
    for t_fix in sorted({m, 2 * m, 3 * m, 4 * m, default, 6 * m, 8 * m}):
        rng = random.Random(args.seed)
        params = ProtocolParams(k, m, 0.1, t_fix, 1, 1)
        ok = sum(trial(params, rng, env) for _ in range(args.trials))
        p = ok / args.trials
        se = math.sqrt(p * (1 - p) / args.trials)
        print(f"{t_fix:>5} {p:>10.3f} {se:>8.3f} {1 - k * math.exp(-t_fix / m):>15.4f}")


if __name__ == "__main__":
    main()
