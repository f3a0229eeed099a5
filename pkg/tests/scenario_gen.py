"""Random but valid scenarios for property tests."""

import numpy as np


def random_scenario(seed: int, n_agents: int = 50, horizon: int = 5000) -> dict:
    rng = np.random.default_rng(seed)
    u = lambda a, b: round(float(rng.uniform(a, b)), 4)
    regimes = [{"block": 0, "base_rate": u(0, 0.05), "slope_low": u(0.05, 0.3), "slope_high": u(0.5, 3),
                "kink": u(0.6, 0.95), "reserve_factor": u(0, 0.3)}]
    if rng.random() < 0.5:
        regimes.append({"block": int(rng.integers(1, horizon)), "base_rate": u(0, 0.05), "slope_low": u(0.05, 0.3),
                        "slope_high": u(0.5, 3), "kink": u(0.6, 0.95), "reserve_factor": u(0, 0.3)})
    coupled = bool(rng.random() < 0.5)
    scen = {
        "schema_version": 1,
        "name": f"random-{seed}",
        "seed": int(seed),
        "horizon_blocks": horizon,
        "seconds_per_block": int(rng.choice([13, 15, 60])),
        "oracle_amm_coupling": coupled,
        "utilization_convention": str(rng.choice(["cash_plus_borrows", "deposits_plus_reserves"])),
        "tokens": [{"symbol": "ETH"}, {"symbol": "DAI", "is_stablecoin": True},
                   {"symbol": "USDC", "is_stablecoin": True}, {"symbol": "COMP"}],
        "pools": [
            {"token": "ETH", "schedule": regimes, "reward_speed": u(0, 0.2)},
            {"token": "DAI", "reward_speed": u(0, 0.2)},
            {"token": "USDC", "reward_speed": u(0, 0.2), "haircut": u(0.15, 0.4)},
        ],
        "liquidation": {"close_factor": u(0.2, 0.8), "incentive": u(0.02, 0.1)},
        "emission": {"reward_token": "COMP", "start_block": int(rng.integers(0, horizon)), "treasury": 1_000_000},
        "oracle": {"prices": {
            "ETH": {"source": "gbm", "p0": 2000, "mu": u(-0.5, 0.5), "sigma": u(0.2, 2.0)},
            "DAI": {"source": "constant", "price": 1},
            "USDC": {"source": "constant", "price": 1},
            "COMP": {"source": "gbm", "p0": 300, "sigma": u(0.2, 1.5)},
        }},
        "amm_pools": [{"token_x": "ETH", "token_y": "USDC", "reserve_x": 2000, "reserve_y": 4_000_000}],
        "agents": [],
    }
    if rng.random() < 0.5:
        scen["oracle"]["shocks"] = [{"token": "ETH", "block": int(rng.integers(1, horizon)), "multiplier": u(0.4, 0.95)}]
    groups = [
        ("LargeAddress", "HoldDeposit", {"token": "DAI"}),
        ("OnRamp", "HoldDeposit", {"token": "USDC", "hold_blocks": 1000, "gap_blocks": 200}),
        ("SmallAddress", "HoldDeposit", {"token": "ETH", "hold_blocks": 800, "gap_blocks": 100}),
        ("SmallAddress", "BorrowAndHold", {"collateral_token": "ETH", "borrow_token": "DAI", "buffer": u(0.5, 0.98),
                                           "hold_blocks": 600, "gap_blocks": 100, "start_window": 200}),
        ("LargeAddress", "BorrowAndHold", {"collateral_token": "USDC", "borrow_token": "ETH", "buffer": u(0.5, 0.98),
                                           "hold_blocks": 900, "start_window": 300}),
        ("YieldAggregator", "LeverageLoop", {"token": "DAI", "rounds": int(rng.integers(1, 8))}),
        ("AssetManagement", "RateChaser", {"token": "USDC", "threshold": 0.005, "check_every": 100}),
        ("MicroAddress", "MicroAirdrop", {"token": "USDC", "start_window": horizon // 2}),
    ]
    counts = rng.multinomial(n_agents - 2, [1 / len(groups)] * len(groups))
    for (cat, strat, params), n in zip(groups, counts):
        if n == 0:
            continue
        cap = 3 if strat == "MicroAirdrop" else {"dist": "lognormal", "median": 50_000, "sigma": 1.0}
        scen["agents"].append({"category": cat, "strategy": strat, "count": int(n), "capital_usd": cap,
                               "params": params})
    scen["agents"].append({"category": "LiquidatorBot", "strategy": "LiquidatorBot", "count": 2,
                           "capital_usd": 2_000_000})
    return scen
