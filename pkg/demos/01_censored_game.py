"""
A day of posted-price auctions, seen from both sides
=====================================================

A greedy advertiser values every impression at 0.7 and bids it whenever the
reserve allows.  We post a fixed reserve and look at what each side sees.
"""

import numpy as np

from adxhba import FixedReserve, GameConfig, Greedy, run_episode
from adxhba.baselines import online_opt_revenue

# one day of 200 impressions with a daily budget of 100
config = GameConfig(days=1, impressions_per_day=200, daily_budget=100.0)
log = run_episode(Greedy(0.7), FixedReserve(500), config, seed=0)

# the advertiser sees its own bids; the publisher only sees sold / unsold
print("first bids   :", log.bids()[:8] / 1000)
print("first sales  :", log.sold()[:8].astype(int))
print("sold", int(log.sold().sum()), "of", len(log), "impressions")

# revenue is the reserve times the number of sales until the budget runs dry
print("publisher revenue :", round(log.publisher_revenue, 3))
print("advertiser surplus:", round(log.advertiser_revenue, 3))

# the clairvoyant benchmark replays the bids and charges each one in full
best = online_opt_revenue(log)
print("online optimum    :", round(best, 3), " ratio", round(log.publisher_revenue / best, 3))

# above 0.5 the budget runs out before the day does; at 0.8 nothing sells
for r in np.arange(300, 801, 100):
    rev = run_episode(Greedy(0.7), FixedReserve(int(r)), config, seed=0).publisher_revenue
    print(f"reserve {r / 1000:.1f}: revenue {rev:7.2f}")
