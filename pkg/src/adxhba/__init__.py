"""Repeated posted-price auctions between a publisher and one advertiser.

The publisher sees only whether each impression sold at its reserve.  The
package provides the game itself, a family of advertiser strategies, a
belief-based publisher with a censored tail estimator for stochastic
bidders, reference publishers, and an experiment harness that reports
competitive ratios against a clairvoyant benchmark.
"""

from .advertisers import (
    AdvertiserSpec,
    Greedy,
    LearnThenBid,
    NeuralNetAdvertiser,
    QLearnAdvertiser,
    RandomBidder,
    UCBAdvertiser,
    random_spec,
)
from .baselines import (
    FixedReserve,
    OfflineOptimal,
    OnlineOptimal,
    QLearnPublisher,
    UCBPublisher,
    best_response,
    online_opt_reserve,
    online_opt_revenue,
)
from .distributions import BidDistribution, revenue_argmax
from .game import (
    CensoredObservation,
    EpisodeLog,
    GameConfig,
    GameState,
    OracleAccess,
    RoundOutcome,
    run_episode,
    step,
)
from .harness import (
    ExperimentConfig,
    MetricsReport,
    competitive_ratio,
    emit_results,
    run_matchup,
    run_nn_protocol,
    run_sweep,
)
from .hba import Beliefs, HBAPublisher, censored_likelihood, censored_utility, update_posterior
from .km import KMCounters, RandomKM, isotonic_tail, random_km, tail_estimate

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
