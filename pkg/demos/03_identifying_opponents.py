"""
Watching the posterior settle on the right opponent
====================================================

The belief-based publisher carries a small menu of advertiser types.  We play
it against each of them in turn and print how much posterior mass lands on
the truth after 10, 50 and 200 rounds.
"""

from adxhba import AdvertiserSpec, GameConfig, HBAPublisher, random_spec, run_episode

types = [AdvertiserSpec("greedy", {"v_max": 0.8}),
         random_spec("uniform", high=0.5),
         AdvertiserSpec("ltb", {"m": 100, "f": 0.5}),
         AdvertiserSpec("ucb", {"k": 100, "epsilon": 0.1})]

config = GameConfig(days=1, impressions_per_day=200, daily_budget=100.0)
for i, truth in enumerate(types):
    pub = HBAPublisher(types, km=(200, 5, 30), gamma=0.05)
    run_episode(truth.build(), pub, config, seed=3)
    trail = [pub.history[t][i] for t in (9, 49, 199)]
    print(f"{truth.label:8s} posterior on truth: " + "  ".join(f"{p:.3f}" for p in trail))

# the beliefs can be written out round by round for plotting
print(pub.write_beliefs().splitlines()[0])
