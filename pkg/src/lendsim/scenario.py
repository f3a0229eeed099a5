"""Scenario file schema (JSON, ``schema_version: 1``) and validation."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Any, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .agents import Strategy
from .fixedpoint import WAD, to_wad, wad_mul
from .ledger import AgentCategory
from .pool import UTILIZATION_CONVENTIONS

SCHEMA_VERSION = 1

Num = Union[int, float, str]


class ScenarioError(Exception):
    """Validation failure; ``errors`` holds ``{"field": ..., "error": ...}`` items."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{e['field']}: {e['error']}" for e in self.errors))


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TokenCfg(_Model):
    symbol: str
    is_stablecoin: bool = False
    decimals: int = 18


class RegimeCfg(_Model):
    block: int = Field(0, ge=0)
    base_rate: Num = 0.02
    slope_low: Num = 0.20
    slope_high: Num = 2.00
    kink: Num = 0.80
    reserve_factor: Num = 0.10


class PoolCfg(_Model):
    token: str
    schedule: list[RegimeCfg] = Field(default_factory=lambda: [RegimeCfg()])
    haircut: Optional[Num] = None
    accepted_as_collateral: bool = True
    reward_speed: Num = 0
    initial_exchange_rate: Optional[Num] = None


class LiquidationCfg(_Model):
    close_factor: Num = 0.5
    incentive: Num = 0.08


class EmissionCfg(_Model):
    reward_token: Optional[str] = None
    start_block: int = Field(0, ge=0)
    treasury: Num = 0


class PriceCfg(_Model):
    source: Literal["constant", "gbm", "file", "scripted"] = "constant"
    price: Num = 1
    p0: Num = 1
    mu: float = 0.0
    sigma: float = Field(0.0, ge=0)
    path: Optional[str] = None
    points: list[tuple[int, Num]] = Field(default_factory=list)


class ShockCfg(_Model):
    token: str
    block: int = Field(ge=0)
    multiplier: Num

    @field_validator("multiplier")
    @classmethod
    def _positive(cls, v):
        if to_wad(v) <= 0:
            raise ValueError("multiplier must be positive")
        return v


class OracleCfg(_Model):
    prices: dict[str, PriceCfg] = Field(default_factory=dict)
    correlation: Optional[list[list[float]]] = None
    correlated_tokens: Optional[list[str]] = None
    shocks: list[ShockCfg] = Field(default_factory=list)


class AmmCfg(_Model):
    token_x: str
    token_y: str
    reserve_x: Num
    reserve_y: Num
    fee: Num = 0.003


class GasCfg(_Model):
    deposit: Num = 2
    withdraw: Num = 2
    borrow: Num = 3
    repay: Num = 3
    liquidate: Num = 10
    claim: Num = 5
    swap: Num = 4


class CapitalCfg(_Model):
    dist: Literal["fixed", "lognormal", "pareto", "uniform"] = "fixed"
    value: Optional[float] = None
    median: Optional[float] = None
    sigma: Optional[float] = None
    alpha: Optional[float] = None
    scale: Optional[float] = None
    low: Optional[float] = None
    high: Optional[float] = None

    @model_validator(mode="after")
    def _fields(self):
        need = {"fixed": ["value"], "lognormal": ["median"], "pareto": ["alpha", "scale"], "uniform": ["low", "high"]}
        missing = [k for k in need[self.dist] if getattr(self, k) is None]
        if missing:
            raise ValueError(f"{self.dist} capital needs {missing}")
        return self


class AgentParamsCfg(_Model):
    token: Optional[str] = None
    collateral_token: Optional[str] = None
    borrow_token: Optional[str] = None
    tokens: Optional[list[str]] = None
    start_block: int = Field(0, ge=0)
    start_window: int = Field(0, ge=0)
    hold_blocks: Optional[int] = Field(None, ge=0)
    gap_blocks: Optional[int] = Field(None, ge=0)
    claim_every: Optional[int] = Field(None, ge=0)
    buffer: Num = 0.7
    repay_buffer: Num = 0.2
    loop_fraction: Optional[Num] = None
    safety_buffer: Num = 0.1
    rounds: int = Field(5, ge=0)
    claim_threshold: Num = 1.0
    threshold: Num = 0.03
    check_every: int = Field(500, ge=1)
    reaction: Num = 1.0
    sell_seized: bool = True


class AgentCfg(_Model):
    category: AgentCategory
    strategy: Strategy
    count: int = Field(1, ge=1)
    capital_usd: Union[CapitalCfg, float, int] = 1000
    params: AgentParamsCfg = Field(default_factory=AgentParamsCfg)
    addresses: Optional[list[int]] = None

    @model_validator(mode="after")
    def _strategy_fields(self):
        s, p = self.strategy, self.params
        if s in (Strategy.HoldDeposit, Strategy.LeverageLoop, Strategy.MicroAirdrop, Strategy.RateChaser) and not p.token:
            raise ValueError(f"{s.value} agents need params.token")
        if s is Strategy.BorrowAndHold and not (p.collateral_token and p.borrow_token):
            raise ValueError("BorrowAndHold agents need params.collateral_token and params.borrow_token")
        if self.addresses is not None:
            if len(self.addresses) != self.count:
                raise ValueError("addresses must list exactly count ids")
            if any(not 1 <= a < RESERVED_ADDRESS_BASE for a in self.addresses):
                raise ValueError(f"addresses must lie in [1, {RESERVED_ADDRESS_BASE})")
        return self


RESERVED_ADDRESS_BASE = 10**9


class ScenarioCfg(_Model):
    schema_version: Literal[1] = 1
    name: str = ""
    seed: int = 0
    horizon_blocks: int = Field(ge=1)
    seconds_per_block: int = Field(13, ge=1)
    utilization_convention: str = "cash_plus_borrows"
    oracle_amm_coupling: bool = False
    tokens: list[TokenCfg]
    pools: list[PoolCfg] = Field(default_factory=list)
    liquidation: LiquidationCfg = Field(default_factory=LiquidationCfg)
    emission: EmissionCfg = Field(default_factory=EmissionCfg)
    oracle: OracleCfg = Field(default_factory=OracleCfg)
    amm_pools: list[AmmCfg] = Field(default_factory=list)
    gas: GasCfg = Field(default_factory=GasCfg)
    agents: list[AgentCfg] = Field(default_factory=list)
    record_risk: bool = True

    @field_validator("utilization_convention")
    @classmethod
    def _conv(cls, v):
        if v not in UTILIZATION_CONVENTIONS:
            raise ValueError(f"must be one of {UTILIZATION_CONVENTIONS}")
        return v

    @model_validator(mode="after")
    def _integrity(self):
        errs = []
        symbols = [t.symbol for t in self.tokens]
        known = set(symbols)
        if len(known) != len(symbols):
            errs.append(("tokens", "duplicate token symbol"))
        pool_tokens = [p.token for p in self.pools]
        if len(set(pool_tokens)) != len(pool_tokens):
            errs.append(("pools", "duplicate pool token"))
        stable = {t.symbol: t.is_stablecoin for t in self.tokens}

        def ref(field, sym, pools_only=False):
            if sym is None:
                return
            if sym not in known:
                errs.append((field, f"unknown token {sym!r}"))
            elif pools_only and sym not in pool_tokens:
                errs.append((field, f"no lending pool for token {sym!r}"))

        lc = self.liquidation
        cf, inc = to_wad(lc.close_factor), to_wad(lc.incentive)
        if not 0 < cf <= WAD:
            errs.append(("liquidation.close_factor", "must lie in (0, 1]"))
        if inc < 0:
            errs.append(("liquidation.incentive", "must be non-negative"))
        for i, p in enumerate(self.pools):
            ref(f"pools.{i}.token", p.token)
            blocks = [r.block for r in p.schedule]
            if not blocks or blocks[0] != 0 or any(b <= a for a, b in zip(blocks, blocks[1:])):
                errs.append((f"pools.{i}.schedule", "activation blocks must start at 0 and increase"))
            g = default_haircut(p, stable.get(p.token, False))
            if not 0 <= g <= WAD:
                errs.append((f"pools.{i}.haircut", "must lie in [0, 1]"))
            elif p.accepted_as_collateral and wad_mul(WAD - g, WAD + inc) >= WAD:
                errs.append((f"pools.{i}.haircut", "(1 - haircut) * (1 + incentive) must be < 1"))
        ref("emission.reward_token", self.emission.reward_token)
        for sym in symbols:
            if sym not in self.oracle.prices:
                errs.append((f"oracle.prices.{sym}", "missing price configuration"))
        for sym, pc in self.oracle.prices.items():
            ref(f"oracle.prices.{sym}", sym)
            if pc.source == "file" and not pc.path:
                errs.append((f"oracle.prices.{sym}.path", "file source needs a path"))
            if pc.source == "scripted" and (not pc.points or pc.points[0][0] != 0):
                errs.append((f"oracle.prices.{sym}.points", "scripted points must start at block 0"))
        if self.oracle.correlation is not None:
            ct = self.oracle.correlated_tokens or []
            if len(self.oracle.correlation) != len(ct):
                errs.append(("oracle.correlation", "matrix size must match correlated_tokens"))
            for sym in ct:
                ref("oracle.correlated_tokens", sym)
                if sym in self.oracle.prices and self.oracle.prices[sym].source != "gbm":
                    errs.append(("oracle.correlated_tokens", f"{sym} is not a gbm source"))
        for i, s in enumerate(self.oracle.shocks):
            ref(f"oracle.shocks.{i}.token", s.token)
            if s.block >= self.horizon_blocks:
                errs.append((f"oracle.shocks.{i}.block", "outside horizon"))
        for i, a in enumerate(self.amm_pools):
            ref(f"amm_pools.{i}.token_x", a.token_x)
            ref(f"amm_pools.{i}.token_y", a.token_y)
            if a.token_x == a.token_y:
                errs.append((f"amm_pools.{i}", "pair needs two distinct tokens"))
        seen_addr = set()
        haircuts = {p.token: default_haircut(p, stable.get(p.token, False)) for p in self.pools}
        for i, a in enumerate(self.agents):
            p = a.params
            for name in ("token", "collateral_token", "borrow_token"):
                ref(f"agents.{i}.params.{name}", getattr(p, name), pools_only=True)
            for sym in p.tokens or []:
                ref(f"agents.{i}.params.tokens", sym, pools_only=True)
            if a.strategy is Strategy.MicroAirdrop and p.token in stable:
                if not stable[p.token]:
                    errs.append((f"agents.{i}.params.token", "micro deposits must be in a stablecoin"))
                cap = a.capital_usd
                v = cap if not isinstance(cap, CapitalCfg) else cap.value
                if isinstance(cap, CapitalCfg) and cap.dist != "fixed" or v is None or to_wad(v) > to_wad(3):
                    errs.append((f"agents.{i}.capital_usd", "micro deposits are a fixed amount of at most 3 USD"))
            if a.strategy is Strategy.LeverageLoop and p.loop_fraction is not None and p.token in haircuts:
                if to_wad(p.loop_fraction) > WAD - haircuts[p.token]:
                    errs.append((f"agents.{i}.params.loop_fraction", "exceeds 1 - haircut of the target token"))
            for addr in a.addresses or []:
                if addr in seen_addr:
                    errs.append((f"agents.{i}.addresses", f"duplicate address {addr}"))
                seen_addr.add(addr)
        if errs:
            raise ValueError(json.dumps([{"field": f, "error": e} for f, e in errs]))
        return self


def default_haircut(pool: PoolCfg, is_stablecoin: bool):
    if pool.haircut is not None:
        return to_wad(pool.haircut)
    return to_wad("0.25") if is_stablecoin else to_wad("0.40")


def _diagnostics(exc: ValidationError) -> list[dict]:
    out = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"])
        msg = err["msg"]
        prefix = "Value error, "
        if msg.startswith(prefix):
            msg = msg[len(prefix):]
            try:
                nested = json.loads(msg)
            except ValueError:
                nested = None
            if isinstance(nested, list):
                out.extend(nested)
                continue
        out.append({"field": loc or "<root>", "error": msg})
    return out


def validate_scenario(data: dict) -> ScenarioCfg:
    try:
        return ScenarioCfg.model_validate(data)
    except ValidationError as exc:
        raise ScenarioError(_diagnostics(exc)) from None


def load_scenario(path) -> ScenarioCfg:
    p = Path(path)
    if not p.is_file():
        raise ScenarioError([{"field": "scenario", "error": f"file not found: {path}"}])
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError([{"field": "scenario", "error": f"invalid JSON: {exc}"}]) from None
    cfg = validate_scenario(data)
    # relative price-file paths are relative to the scenario file
    for pc in cfg.oracle.prices.values():
        if pc.path and not Path(pc.path).is_absolute():
            pc.path = str((p.parent / pc.path).resolve())
    return cfg


def scenario_dict(cfg: ScenarioCfg) -> dict:
    return cfg.model_dump(mode="json")


def scenario_hash(cfg: ScenarioCfg) -> str:
    blob = json.dumps(scenario_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def set_path(data: dict, path: str, value: Any) -> dict:
    """Copy of ``data`` with the dotted ``path`` set; list indices are integers.

    The final key may be new (an optional field left at its default);
    schema validation rejects it if it is not a real field.
    """
    out = copy.deepcopy(data)
    parts = path.split(".")
    node = out
    for i, part in enumerate(parts):
        last = i == len(parts) - 1
        if isinstance(node, list):
            try:
                idx = int(part)
                node[idx]
            except (ValueError, IndexError):
                raise ScenarioError([{"field": path, "error": f"cannot resolve {part!r}"}]) from None
            if last:
                node[idx] = value
            else:
                node = node[idx]
        elif isinstance(node, dict):
            if part not in node and not last:
                raise ScenarioError([{"field": path, "error": f"cannot resolve {part!r}"}])
            if last:
                node[part] = value
            else:
                node = node[part]
        else:
            raise ScenarioError([{"field": path, "error": f"cannot descend into {part!r}"}])
    return out
