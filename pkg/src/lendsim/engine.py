"""Deterministic block loop, crash experiments and parameter sweeps.

Each block runs, in order: oracle update, interest accrual, reward index
update, agent steps (by address), liquidation scan, snapshot.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import amm as amm_mod
from . import pool as pl
from .agents import Agent, GasModel, Intent, Strategy, sample_capital, step_agent
from .comptroller import (CollateralConfig, Comptroller, ComptrollerError, EmissionSchedule,
                          LiquidationConfig)
from .fixedpoint import WAD, Wad, format_wad, to_wad, wad_div, wad_mul
from .ledger import AgentCategory, BlockClock, EventKind, Ledger, Token
from .oracle import (OracleError, PriceSeries, PriceSource, apply_shock, generate_correlated_gbm,
                     generate_gbm, load_price_file)
from .rates import InterestParams, RegimeSchedule
from .scenario import (RESERVED_ADDRESS_BASE, CapitalCfg, ScenarioCfg, ScenarioError, default_haircut,
                       scenario_dict, set_path, validate_scenario)

log = logging.getLogger(__name__)

EXTERNAL_MARKET = 0  # AMM liquidity provider and arbitrageur

SNAPSHOT_COLUMNS = [
    "block", "token", "cash", "borrows", "reserves", "ctoken_supply", "exchange_rate",
    "utilization", "borrow_rate", "supply_rate",
    # extras used by the feature builder
    "price", "supply_reward_rate", "borrow_reward_rate",
]
RISK_COLUMNS = ["block", "address", "liquidity_usd", "total_collateral_usd", "total_debt_usd"]
AGENT_COLUMNS = ["address", "category", "total_deposited", "total_borrowed", "reward_claimed",
                 "liquidated_count", "pnl_usd"]
REWARD_COLUMNS = ["address", "accrued", "claimed"]
AMM_COLUMNS = ["block", "amm", "token_x", "token_y", "reserve_x", "reserve_y", "spot_price", "lp_supply"]


def amm_address(i: int) -> int:
    return RESERVED_ADDRESS_BASE + i


def _seed_int(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


@dataclass
class RunOutput:
    scenario: ScenarioCfg
    tokens: dict
    ledger: Ledger
    snapshots: list = field(default_factory=list)
    amm_snapshots: list = field(default_factory=list)
    risk: list = field(default_factory=list)
    agents: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    liquidations: list = field(default_factory=list)
    accruals: list = field(default_factory=list)
    rejections: list = field(default_factory=list)
    categories: dict = field(default_factory=dict)
    prices: dict = field(default_factory=dict)  # token -> list of per-block oracle prices
    outstanding_debt_usd: dict = field(default_factory=dict)  # block -> debt USD when liquidations began

    @property
    def seconds_per_block(self) -> int:
        return self.scenario.seconds_per_block

    def meta(self) -> dict:
        return {
            "seconds_per_block": self.scenario.seconds_per_block,
            "horizon_blocks": self.scenario.horizon_blocks,
            "seed": self.scenario.seed,
            "tokens": [asdict(t) for t in self.tokens.values()],
            "categories": {str(a): c.value for a, c in sorted(self.categories.items())},
            "emission_start_block": self.scenario.emission.start_block,
            "reward_token": self.scenario.emission.reward_token,
        }

    def write(self, out_dir, extra_manifest: Optional[dict] = None) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {
            "ledger.jsonl": self.ledger.to_jsonl(),
            "snapshots.csv": rows_to_csv(self.snapshots, SNAPSHOT_COLUMNS),
            "risk.csv": rows_to_csv(self.risk, RISK_COLUMNS),
            "agents.csv": rows_to_csv(self.agents, AGENT_COLUMNS),
            "rewards.csv": rows_to_csv(self.rewards, REWARD_COLUMNS),
            "amm.csv": rows_to_csv(self.amm_snapshots, AMM_COLUMNS),
        }
        for name, text in files.items():
            (out / name).write_text(text)
        manifest = {
            "schema_version": self.scenario.schema_version,
            "seed": self.scenario.seed,
            "scenario": scenario_dict(self.scenario),
            "scenario_sha256": _sha(json.dumps(scenario_dict(self.scenario), sort_keys=True)),
            "meta": self.meta(),
            "files": {n: _sha(t) for n, t in sorted(files.items())},
        }
        manifest.update(extra_manifest or {})
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return manifest


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, int):
        return v
    return v


def rows_to_csv(rows: Sequence[dict], columns: Sequence[str], wad_columns: Optional[set] = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    wad_columns = wad_columns if wad_columns is not None else WAD_COLUMNS
    for r in rows:
        out = []
        for c in columns:
            v = r.get(c)
            if v is None:
                out.append("")
            elif c in wad_columns:
                out.append(format_wad(v))
            elif hasattr(v, "value"):
                out.append(v.value)
            else:
                out.append(v)
        w.writerow(out)
    return buf.getvalue()


WAD_COLUMNS = {
    "cash", "borrows", "reserves", "ctoken_supply", "exchange_rate", "utilization", "borrow_rate",
    "supply_rate", "price", "supply_reward_rate", "borrow_reward_rate", "liquidity_usd",
    "total_collateral_usd", "total_debt_usd", "total_deposited", "total_borrowed", "reward_claimed",
    "pnl_usd", "accrued", "claimed", "reserve_x", "reserve_y", "spot_price", "lp_supply",
}


class Simulation:
    """One run of a validated scenario. Single-threaded, no shared state."""

    def __init__(self, cfg: ScenarioCfg, observer: Optional[Callable] = None):
        self.cfg = cfg
        self.observer = observer
        self.horizon = cfg.horizon_blocks
        self.tokens = {i: Token(i, t.symbol, t.is_stablecoin, t.decimals) for i, t in enumerate(cfg.tokens)}
        self.sym = {t.symbol: i for i, t in self.tokens.items()}
        self.clock = BlockClock(0, cfg.seconds_per_block)
        self.ledger = Ledger()
        self.gas = GasModel.from_usd(**cfg.gas.model_dump())
        self._build_oracle()
        self._build_protocol()
        self._build_amms()
        self._build_agents()
        self.out = RunOutput(cfg, self.tokens, self.ledger, categories=self.categories)
        # cascade lineage: AMM index -> highest wave among this block's fire sales
        self._sales_prev: dict[int, int] = {}
        self._sales_cur: dict[int, int] = {}
        self._pre_sale_spot: dict[int, Wad] = {}
        self._tainted: dict[int, int] = {}
        self._cf_prices: dict[int, Wad] = {}
        self._last_wave: dict[int, int] = {}

    # -- construction -------------------------------------------------------
    def _build_oracle(self):
        cfg, H, spb = self.cfg, self.horizon, self.cfg.seconds_per_block
        series: dict[int, PriceSeries] = {}
        corr_syms = (cfg.oracle.correlated_tokens or []) if cfg.oracle.correlation is not None else []
        if corr_syms:
            pcs = [cfg.oracle.prices[s] for s in corr_syms]
            ids = [self.sym[s] for s in corr_syms]
            try:
                for s in generate_correlated_gbm(
                    _seed_int(cfg.seed, 7_000_001), [to_wad(p.p0) for p in pcs], [p.mu for p in pcs],
                    [p.sigma for p in pcs], np.array(cfg.oracle.correlation), H, spb, ids,
                ):
                    series[s.token] = s
            except OracleError as exc:
                raise ScenarioError([{"field": "oracle.correlation", "error": str(exc)}]) from None
        for sym, pc in cfg.oracle.prices.items():
            t = self.sym[sym]
            if t in series:
                continue
            if pc.source == "constant":
                series[t] = PriceSeries.constant(t, to_wad(pc.price), H)
            elif pc.source == "gbm":
                series[t] = generate_gbm(_seed_int(cfg.seed, 1_000_000 + t), to_wad(pc.p0), pc.mu, pc.sigma, H, spb, t)
            elif pc.source == "file":
                try:
                    series[t] = load_price_file(pc.path, t, H, spb)
                except (OSError, OracleError) as exc:
                    raise ScenarioError([{"field": f"oracle.prices.{sym}.path", "error": str(exc)}]) from None
            else:
                pts = [(int(b), to_wad(p)) for b, p in pc.points]
                prices, j = [], 0
                for b in range(H):
                    while j + 1 < len(pts) and pts[j + 1][0] <= b:
                        j += 1
                    prices.append(pts[j][1])
                series[t] = PriceSeries(t, tuple(prices), PriceSource.Scripted)
        for shock in cfg.oracle.shocks:
            t = self.sym[shock.token]
            series[t] = apply_shock(series[t], shock.block, shock.multiplier)
        self.series = series

    def _build_protocol(self):
        cfg = self.cfg
        pools, coll = {}, {}
        speeds = {}
        for pc in cfg.pools:
            t = self.sym[pc.token]
            sched = RegimeSchedule([(r.block, InterestParams.from_dict(r.model_dump())) for r in pc.schedule])
            kw = {}
            if pc.initial_exchange_rate is not None:
                kw["initial_exchange_rate"] = to_wad(pc.initial_exchange_rate)
            pools[t] = pl.PoolState(t, sched, self.clock.blocks_per_year,
                                    utilization_convention=cfg.utilization_convention, **kw)
            coll[t] = CollateralConfig(default_haircut(pc, self.tokens[t].is_stablecoin), pc.accepted_as_collateral)
            speeds[t] = to_wad(pc.reward_speed)
        em = cfg.emission
        rt = self.sym[em.reward_token] if em.reward_token else None
        emission = EmissionSchedule(rt, speeds if rt is not None else {}, em.start_block)
        self.comp = Comptroller(
            self.tokens, pools, coll,
            LiquidationConfig(to_wad(cfg.liquidation.close_factor), to_wad(cfg.liquidation.incentive)),
            emission, self.clock, self.ledger,
            reward_treasury=to_wad(em.treasury) if rt is not None else 0,
        )
        self._set_prices(0)

    def _build_amms(self):
        self.amms: list[amm_mod.AmmPool] = []
        self.coupled: dict[int, int] = {}  # token -> amm index
        for i, ac in enumerate(self.cfg.amm_pools):
            x, y = self.sym[ac.token_x], self.sym[ac.token_y]
            pool = amm_mod.AmmPool(x, y, fee=to_wad(ac.fee))
            rx, ry = to_wad(ac.reserve_x), to_wad(ac.reserve_y)
            self.comp.mint_to(EXTERNAL_MARKET, x, rx)
            self.comp.mint_to(EXTERNAL_MARKET, y, ry)
            self.comp.wallets[(EXTERNAL_MARKET, x)] -= rx
            self.comp.wallets[(EXTERNAL_MARKET, y)] -= ry
            amm_mod.add_liquidity(pool, rx, ry)
            self.amms.append(pool)
            if self.cfg.oracle_amm_coupling and x not in self.coupled:
                self.coupled[x] = i
                # arbitrage inventory for transmitting exogenous moves
                self.comp.mint_to(EXTERNAL_MARKET, x, rx * 1000)
                self.comp.mint_to(EXTERNAL_MARKET, y, ry * 1000)
        self._set_prices(0)

    def _build_agents(self):
        cfg = self.cfg
        self.agents: list[Agent] = []
        self.categories: dict[int, AgentCategory] = {EXTERNAL_MARKET: AgentCategory.UnidentifiedContract}
        for i in range(len(self.amms)):
            self.categories[amm_address(i)] = AgentCategory.DecentralizedExchange
        next_addr = 1
        used = {a for ac in cfg.agents for a in (ac.addresses or [])}
        for ac in cfg.agents:
            for j in range(ac.count):
                if ac.addresses is not None:
                    addr = ac.addresses[j]
                else:
                    while next_addr in used:
                        next_addr += 1
                    addr = next_addr
                    used.add(addr)
                rng = np.random.default_rng([cfg.seed, addr])
                params = self._agent_params(ac)
                cap_spec = ac.capital_usd.model_dump() if isinstance(ac.capital_usd, CapitalCfg) else ac.capital_usd
                agent = Agent(addr, ac.category, ac.strategy, params, rng)
                agent.capital_usd = to_wad(max(0.0, sample_capital(cap_spec, rng)))
                agent.next_wake = params["start_block"] + (
                    int(rng.integers(0, params["start_window"] + 1)) if params["start_window"] else 0)
                self._endow(agent)
                self.agents.append(agent)
                self.categories[addr] = ac.category
        self.agents.sort(key=lambda a: a.address)
        self.by_address = {a.address: a for a in self.agents}

    def _agent_params(self, ac) -> dict:
        p = ac.params
        tok = lambda s: None if s is None else self.sym[s]
        out = {
            "token": tok(p.token), "collateral_token": tok(p.collateral_token),
            "borrow_token": tok(p.borrow_token),
            "tokens": [self.sym[s] for s in p.tokens] if p.tokens else sorted(self.comp.pools),
            "start_block": p.start_block, "start_window": p.start_window,
            "buffer": to_wad(p.buffer), "repay_buffer": to_wad(p.repay_buffer),
            "safety_buffer": to_wad(p.safety_buffer), "rounds": p.rounds,
            "claim_threshold": to_wad(p.claim_threshold), "threshold": to_wad(p.threshold),
            "check_every": p.check_every, "reaction": to_wad(p.reaction), "sell_seized": p.sell_seized,
        }
        for k in ("hold_blocks", "gap_blocks", "claim_every"):
            if getattr(p, k) is not None:
                out[k] = getattr(p, k)
        if p.loop_fraction is not None:
            out["loop_fraction"] = to_wad(p.loop_fraction)
        return out

    def _endow(self, agent: Agent) -> None:
        p, cap = agent.params, agent.capital_usd
        grants = []
        if agent.strategy is Strategy.BorrowAndHold:
            grants.append((p["collateral_token"], cap))
            extra = wad_mul(wad_mul(cap, p["buffer"]), p["repay_buffer"])
            grants.append((p["borrow_token"], extra))
        elif agent.strategy is Strategy.LiquidatorBot:
            toks = p["tokens"]
            for t in toks:
                grants.append((t, cap // len(toks)))
        else:
            grants.append((p["token"], cap))
        for t, usd in grants:
            amount = wad_div(usd, self.comp.prices[t])
            if amount > 0:
                self.comp.mint_to(agent.address, t, amount)
                agent.endowment_usd += wad_mul(amount, self.comp.prices[t])

    # -- per-block phases -------------------------------------------------------
    def _set_prices(self, block: int) -> None:
        for t, s in self.series.items():
            self.comp.prices[t] = s.prices[block]
        for t, i in getattr(self, "coupled", {}).items():
            amm = self.amms[i]
            self.comp.prices[t] = wad_mul(amm_mod.spot_price(amm), self.comp.prices[amm.token_y])

    def _oracle_update(self, block: int) -> None:
        self._sales_prev, self._sales_cur = self._sales_cur, {}
        pre_sale, self._pre_sale_spot = self._pre_sale_spot, {}
        self._tainted = {}
        cf_spot = {}
        if block > 0:
            for t, i in self.coupled.items():
                amm = self.amms[i]
                prev, now = self.series[t].prices[block - 1], self.series[t].prices[block]
                if prev != now:
                    target = amm_mod.spot_price(amm) * now // prev
                    token_in, amount = amm_mod.amount_in_for_price(amm, max(1, target))
                    if amount > 0:
                        self._swap(EXTERNAL_MARKET, i, token_in, amount)
                if i in self._sales_prev:
                    self._tainted[t] = self._sales_prev[i]
                    # where the price would sit had last block's fire sales not happened
                    cf_spot[t] = (pre_sale[i] * now // prev, self.amms[i].token_y)
        self._set_prices(block)
        self._cf_prices = dict(self.comp.prices)
        for t, (spot, quote) in cf_spot.items():
            self._cf_prices[t] = wad_mul(spot, self.comp.prices[quote])

    def _swap(self, address: int, amm_index: int, token_in: int, amount: Wad) -> Wad:
        amm = self.amms[amm_index]
        comp = self.comp
        if comp.wallets[(address, token_in)] < amount:
            raise ComptrollerError(f"address {address} cannot fund swap of {amount}")
        out = amm_mod.swap_exact_in(amm, token_in, amount)
        token_out = amm.other(token_in)
        comp.wallets[(address, token_in)] -= amount
        comp.wallets[(address, token_out)] += out
        a_addr = amm_address(amm_index)
        self.ledger.record(self.clock.block_number, address, EventKind.Swap, token_in, amount,
                           wad_mul(amount, comp.prices[token_in]), a_addr)
        self.ledger.record(self.clock.block_number, a_addr, EventKind.Swap, token_out, out,
                           wad_mul(out, comp.prices[token_out]), address)
        return out

    def _apply(self, agent: Agent, it: Intent) -> None:
        comp, gas = self.comp, self.gas
        a = agent.address
        if it.action == "deposit":
            amount = min(it.amount if it.amount is not None else comp.wallets[(a, it.token)],
                         comp.wallets[(a, it.token)])
            comp.supply(a, it.token, amount)
            agent.total_deposited_usd += comp.usd(it.token, amount)
            agent.gas_spent_usd += gas.deposit
        elif it.action == "withdraw":
            pos = comp.position(a, it.token)
            ct = pos.ctoken_balance if it.amount is None else it.amount
            if ct <= 0:
                raise pl.PoolError("nothing to withdraw")
            comp.redeem(a, it.token, ct)
            agent.gas_spent_usd += gas.withdraw
        elif it.action == "borrow":
            price = comp.price(it.token)
            room = wad_div(max(0, comp.account_liquidity(a)), price)
            if it.amount is None:
                amount = wad_mul(room, it.limit_fraction if it.limit_fraction is not None else WAD)
            else:
                amount = min(it.amount, room) if it.cap_to_limit else it.amount
            comp.borrow(a, it.token, amount)
            agent.total_borrowed_usd += comp.usd(it.token, amount)
            agent.gas_spent_usd += gas.borrow
        elif it.action == "repay":
            comp.accrue_interest(it.token)
            debt = comp.position(a, it.token).debt(comp.pools[it.token])
            amount = min(debt, comp.wallets[(a, it.token)]) if it.amount is None else it.amount
            comp.repay(a, it.token, amount)
            agent.gas_spent_usd += gas.repay
        elif it.action == "claim":
            agent.reward_claimed += comp.claim_rewards(a)
            agent.gas_spent_usd += gas.claim
        elif it.action == "liquidate":
            self._liquidate(agent, it)
        else:
            raise ValueError(f"unknown intent {it.action}")

    def _liquidate(self, agent: Agent, it: Intent) -> None:
        comp = self.comp
        block = self.clock.block_number
        if block not in self.out.outstanding_debt_usd:
            self.out.outstanding_debt_usd[block] = sum(comp.account_values(b)[2] for b in comp.borrowers())
        waves = [self._tainted[t] for t in comp.accounts[it.borrower] if t in self._tainted]
        caused = bool(waves) and comp.account_liquidity(it.borrower, self._cf_prices) >= 0
        rec = comp.liquidate(agent.address, it.borrower, it.token, it.amount, it.seize_token)
        rec.wave = 1 + max(waves) if caused else self._last_wave.get(it.borrower, 1)
        self._last_wave[it.borrower] = rec.wave
        self.out.liquidations.append(rec)
        agent.gas_spent_usd += self.gas.liquidate
        victim = self.by_address.get(it.borrower)
        if victim is not None:
            victim.liquidated_count += 1
        if not agent.params.get("sell_seized", True):
            return
        idx = next((i for i, m in enumerate(self.amms) if it.seize_token in (m.token_x, m.token_y)), None)
        if idx is None:
            return
        pool = comp.pools[it.seize_token]
        ct = min(rec.seized_ctokens, wad_div(pool.total_cash, pool.exchange_rate))
        if ct <= 0:
            return
        try:
            got = comp.redeem(agent.address, it.seize_token, ct)
            agent.gas_spent_usd += self.gas.withdraw
            if got > 0:
                self._pre_sale_spot.setdefault(idx, amm_mod.spot_price(self.amms[idx]))
                self._swap(agent.address, idx, it.seize_token, got)
                agent.gas_spent_usd += self.gas.swap
                self._sales_cur[idx] = max(self._sales_cur.get(idx, 0), rec.wave)
        except (ComptrollerError, pl.PoolError, amm_mod.AmmError) as exc:
            self.out.rejections.append({"block": self.clock.block_number, "address": agent.address,
                                        "action": "fire_sale", "reason": str(exc)})

    def _run_intents(self, agent: Agent, intents) -> None:
        for it in intents:
            try:
                self._apply(agent, it)
            except (ComptrollerError, pl.PoolError, amm_mod.AmmError, OracleError) as exc:
                self.out.rejections.append({
                    "block": self.clock.block_number, "address": agent.address,
                    "action": it.action, "reason": f"{type(exc).__name__}: {exc}",
                })

    def _snapshot(self, block: int) -> None:
        comp = self.comp
        rt = comp.emission.reward_token
        rprice = comp.prices.get(rt, 0) if rt is not None else 0
        for t in sorted(comp.pools):
            row = pl.snapshot_row(comp.pools[t], block)
            row["token"] = self.tokens[t].symbol
            row["price"] = comp.prices[t]
            s_rew, b_rew = comp.reward_rates(t, rprice)
            row["supply_reward_rate"] = s_rew
            row["borrow_reward_rate"] = b_rew
            self.out.snapshots.append(row)
        for i, m in enumerate(self.amms):
            self.out.amm_snapshots.append({
                "block": block, "amm": amm_address(i), "token_x": self.tokens[m.token_x].symbol,
                "token_y": self.tokens[m.token_y].symbol, "reserve_x": m.reserve_x,
                "reserve_y": m.reserve_y, "spot_price": amm_mod.spot_price(m), "lp_supply": m.lp_supply,
            })
        if self.cfg.record_risk:
            for addr in sorted(comp.borrowers()):
                self.out.risk.append(comp.risk_row(addr))
        for t, p in comp.prices.items():
            self.out.prices.setdefault(t, []).append(p)

    def step(self, block: int) -> None:
        if block > 0:
            self.clock.advance(block)
        self._oracle_update(block)
        for t in sorted(self.comp.pools):
            acc = self.comp.accrue_interest(t)
            if acc.blocks:
                self.out.accruals.append((t, acc))
        self.comp.accrue_rewards_all()
        liquidators = []
        for agent in self.agents:
            if agent.strategy is Strategy.LiquidatorBot:
                liquidators.append(agent)
                continue
            if block < agent.next_wake:
                continue
            self._run_intents(agent, step_agent(agent, self.comp, block, self.gas))
        for agent in liquidators:
            budget = {t: self.comp.wallets.get((agent.address, t), 0) for t in self.comp.pools}
            self._run_intents(agent, step_agent(agent, self.comp, block, self.gas, budget))
        self._snapshot(block)
        if self.observer is not None:
            self.observer(self, block)

    def run(self) -> RunOutput:
        for block in range(self.horizon):
            self.step(block)
        self._finish()
        return self.out

    def _finish(self) -> None:
        comp = self.comp
        comp.sweep_rewards()
        for a in sorted(set(comp.rewards.accrued) | set(comp.rewards.claimed)):
            self.out.rewards.append({"address": a, "accrued": comp.rewards.accrued.get(a, 0),
                                     "claimed": comp.rewards.claimed.get(a, 0)})
        for agent in self.agents:
            self.out.agents.append({
                "address": agent.address, "category": agent.category.value,
                "total_deposited": agent.total_deposited_usd, "total_borrowed": agent.total_borrowed_usd,
                "reward_claimed": agent.reward_claimed, "liquidated_count": agent.liquidated_count,
                "pnl_usd": self.net_worth(agent.address) - agent.endowment_usd - agent.gas_spent_usd,
            })

    def net_worth(self, address: int) -> Wad:
        comp = self.comp
        total = 0
        for (a, t), bal in comp.wallets.items():
            if a == address and bal:
                total += wad_mul(bal, comp.prices[t])
        _, gross, debt = comp.account_values(address)
        rt = comp.emission.reward_token
        if rt is not None:
            total += wad_mul(comp.rewards.accrued.get(address, 0), comp.prices.get(rt, 0))
        return total + gross - debt

    # -- invariants ---------------------------------------------------------------
    def token_holdings(self) -> dict[int, Wad]:
        """Per token: wallets + pool cash + AMM reserves (+ reward custody)."""
        comp = self.comp
        held = {t: 0 for t in self.tokens}
        for (_, t), bal in comp.wallets.items():
            held[t] += bal
        for t, p in comp.pools.items():
            held[t] += p.total_cash
        for m in self.amms:
            held[m.token_x] += m.reserve_x
            held[m.token_y] += m.reserve_y
        rt = comp.emission.reward_token
        if rt is not None:
            held[rt] += comp.rewards.treasury + comp.rewards.held
        return held


def run(cfg, observer: Optional[Callable] = None) -> RunOutput:
    if isinstance(cfg, dict):
        cfg = validate_scenario(cfg)
    return Simulation(cfg, observer).run()


def ledger_sha256(output: RunOutput) -> str:
    return _sha(output.ledger.to_jsonl())


def summarize(output: RunOutput) -> dict:
    liq_usd = sum(r.repay_usd for r in output.liquidations)
    return {
        "n_events": len(output.ledger),
        "n_liquidations": len(output.liquidations),
        "liquidation_usd": format_wad(liq_usd),
        "max_wave": max((r.wave for r in output.liquidations), default=0),
        "n_rejections": len(output.rejections),
        "ledger_sha256": ledger_sha256(output),
    }


def _with_shock(data: dict, shock_block: int, multiplier, tokens: Optional[Sequence[str]]) -> dict:
    data = json.loads(json.dumps(data))
    stable = {t["symbol"]: t.get("is_stablecoin", False) for t in data["tokens"]}
    reward = (data.get("emission") or {}).get("reward_token")
    targets = list(tokens) if tokens else [s for s, st in stable.items() if not st and s != reward]
    shocks = data.setdefault("oracle", {}).setdefault("shocks", [])
    for s in targets:
        shocks.append({"token": s, "block": shock_block, "multiplier": multiplier})
    return data


def crash_report(output: RunOutput, shock_block: int, multiplier) -> dict:
    per_block: dict[int, int] = {}
    for r in output.liquidations:
        per_block[r.block] = per_block.get(r.block, 0) + r.repay_usd
    shares = {}
    for b, usd in per_block.items():
        outstanding = output.outstanding_debt_usd.get(b, 0)
        shares[b] = usd / outstanding if outstanding else 0.0
    total = sum(per_block.values())
    pre = sum(r["total_debt_usd"] for r in output.risk if r["block"] == shock_block - 1)
    return {
        "multiplier": float(to_wad(multiplier)) / WAD,
        "liquidation_usd_per_block": {b: format_wad(v) for b, v in sorted(per_block.items())},
        "total_liquidation_usd": format_wad(total),
        "total_liquidation_usd_wad": total,
        "fraction_liquidated": total / pre if pre else 0.0,
        "max_block_share": max(shares.values(), default=0.0),
        "block_shares": shares,
        "cascade_waves": max((r.wave for r in output.liquidations if r.block >= shock_block), default=0),
        "n_liquidations": len(output.liquidations),
    }


def run_crash_experiment(cfg, shock_block: int, multipliers: Sequence, tokens: Optional[Sequence[str]] = None,
                         keep_outputs: bool = False) -> list[dict]:
    """One run per multiplier with every volatile token shocked at ``shock_block``."""
    base = scenario_dict(cfg) if isinstance(cfg, ScenarioCfg) else dict(cfg)
    reports = []
    for m in multipliers:
        if not 0 < to_wad(m) <= WAD:
            raise ScenarioError([{"field": "multipliers", "error": f"{m} not in (0, 1]"}])
        out = run(validate_scenario(_with_shock(base, shock_block, m, tokens)))
        rep = crash_report(out, shock_block, m)
        if keep_outputs:
            rep["output"] = out
        reports.append(rep)
    return reports


def _sweep_one(args) -> dict:
    base, path, value, out_dir = args
    cfg = validate_scenario(set_path(base, path, value))
    output = run(cfg)
    summary = summarize(output)
    if out_dir is not None:
        output.write(out_dir, {"sweep": {"param": path, "value": value}})
    return {"value": value, **summary}


def sweep(cfg, parameter_path: str, values: Sequence, parallelism: int = 1,
          out_dirs: Optional[Sequence] = None) -> list[dict]:
    """Independent runs, one per value, returned in input order.

    ``out_dirs`` (one per value) also writes each run's files.
    """
    base = scenario_dict(cfg) if isinstance(cfg, ScenarioCfg) else scenario_dict(validate_scenario(cfg))
    values = list(values)
    if not values:
        raise ScenarioError([{"field": "values", "error": "empty value list"}])
    dirs = list(out_dirs) if out_dirs is not None else [None] * len(values)
    jobs = [(base, parameter_path, v, d) for v, d in zip(values, dirs)]
    validate_scenario(set_path(base, parameter_path, values[0]))  # fail fast on a bad path
    if parallelism <= 1 or len(jobs) <= 1:
        return [_sweep_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=parallelism) as ex:
        return list(ex.map(_sweep_one, jobs))
