from fractions import Fraction

import numpy as np
import pytest

from golden import GOLDEN_DIR, load_golden, render
from lendsim.analytics import (
    AnalyticsError, LENDING_POOL, address_volumes, concentration, detect_redeposits, flow_network,
    liquidation_matrix, micro_filter, network_edges, reconstruct_closed_loans, reconstruct_loans,
    top_k_share,
)
from lendsim.fixedpoint import WAD, to_wad
from lendsim.ledger import AgentCategory, Event, EventKind as K, Ledger, Token

ETH, DAI, USDC = 0, 1, 2
TOKENS = {ETH: Token(ETH, "ETH"), DAI: Token(DAI, "DAI", True), USDC: Token(USDC, "USDC", True)}
SPB = 3600  # 24 blocks per day keeps the hand arithmetic simple


def ev(block, addr, kind, token, usd, cp=None, debt=None, amount=None):
    return Event(block, addr, kind, token, to_wad(amount if amount is not None else usd), to_wad(usd), cp,
                 None if debt is None else to_wad(debt))


def led(*events):
    return Ledger(events)


# --- golden ledger -----------------------------------------------------------


@pytest.fixture(scope="module")
def golden():
    return load_golden()


def test_golden_outputs_byte_stable(golden):
    for name, text in render(*golden).items():
        assert (GOLDEN_DIR / name).read_text() == text, name


def test_golden_closed_loans_by_hand(golden):
    ledger, _, _, spb = golden
    loans = reconstruct_closed_loans(ledger, spb)
    got = [(l.address, l.token, l.open_block, l.close_block) for l in loans]
    assert got == [(2, 1, 2, 90), (3, 1, 5, 48), (7, 2, 13, 40), (10, 1, 23, 80),
                   (7, 2, 70, 80), (1, 2, 110, 150), (7, 0, 151, 170)]
    a = loans[0]
    assert a.duration_days == pytest.approx(88 / 24)
    assert (a.draw_events, a.repay_events, a.liquidation_events) == ([3, 19], [11, 36], [26, 28])
    open_ = [l for l in reconstruct_loans(ledger, spb) if not l.closed]
    assert [(l.address, l.token, l.open_block) for l in open_] == [(3, 2, 100)]


def test_golden_redeposit_flags_by_hand(golden):
    ledger, _, _, spb = golden
    flags = {(d.address, d.token, d.day): (d.redeposited_same_day, d.redeposited_within_1d)
             for d in detect_redeposits(ledger, seconds_per_block=spb)}
    assert flags == {
        (1, 2, 4): (False, False), (2, 1, 0): (False, False), (2, 1, 1): (False, False),
        (3, 1, 0): (True, True), (3, 2, 4): (False, False), (7, 0, 6): (False, False),
        (7, 2, 0): (True, True), (7, 2, 2): (False, True), (10, 1, 0): (False, True),
    }


def test_golden_concentration_micro_matrix_by_hand(golden):
    ledger, tokens, cats, _ = golden
    assert concentration(ledger, "deposits", 1) == pytest.approx(21000 / 63995)
    assert concentration(ledger, "deposits", 3) == pytest.approx(53100 / 63995)
    assert concentration(ledger, "loans", 2) == pytest.approx(8100 / 11790)
    assert micro_filter(ledger, tokens) == {5}
    m = liquidation_matrix(ledger, tokens)
    assert m.loc["DAI", "ETH"] == 3000 * WAD and m.loc["ETH", "USDC"] == 300 * WAD
    assert m.loc["total", "total"] == 3300 * WAD
    edges = {(u, v): usd for u, v, usd in network_edges(flow_network(ledger, cats, tokens))}
    assert edges[("SmallAddress", LENDING_POOL)] == 6800 * WAD
    assert edges[("DecentralizedExchange", "LiquidatorBot")] == 3240 * WAD
    assert len(edges) == 16


def test_golden_replay_without_debt_after_matches(golden):
    ledger, _, _, spb = golden
    stripped = Ledger(Event(e.block, e.address, e.kind, e.token, e.amount, e.usd_value, e.counterparty, None)
                      for e in ledger)
    key = lambda ls: [(l.address, l.token, l.open_block, l.close_block) for l in ls]
    assert key(reconstruct_loans(stripped, spb)) == key(reconstruct_loans(ledger, spb))


# --- loans -----------------------------------------------------------------------


def test_single_loan_31_days():
    l = led(ev(0, 1, K.Borrow, DAI, 100, debt=100), ev(31 * 24, 1, K.Repay, DAI, 100, debt=0))
    (loan,) = reconstruct_closed_loans(l, SPB)
    assert loan.duration_days == 31.0


def test_multiple_draws_one_cycle():
    l = led(ev(0, 1, K.Borrow, DAI, 100, debt=100), ev(5, 1, K.Borrow, DAI, 50, debt=150),
            ev(9, 1, K.Repay, DAI, 60, debt=90), ev(12, 1, K.Repay, DAI, 90, debt=0))
    (loan,) = reconstruct_closed_loans(l, SPB)
    assert loan.draw_events == [0, 1] and loan.repay_events == [2, 3]
    assert loan.drawn_usd == 150 * WAD and loan.peak_debt_usd == 150 * WAD


def test_open_loan_excluded_and_new_cycle_after_close():
    l = led(ev(0, 1, K.Borrow, DAI, 100, debt=100), ev(2, 1, K.Repay, DAI, 100, debt=0),
            ev(3, 1, K.Borrow, DAI, 10, debt=10))
    assert len(reconstruct_loans(l, SPB)) == 2
    assert [x.open_block for x in reconstruct_closed_loans(l, SPB)] == [0]


def test_liquidation_closes_borrowers_loan():
    l = led(ev(0, 1, K.Borrow, DAI, 100, debt=100),
            ev(4, 9, K.LiquidateRepay, DAI, 100, cp=1, debt=0),
            ev(4, 9, K.LiquidateSeize, ETH, 108, cp=1, amount=1))
    (loan,) = reconstruct_closed_loans(l, SPB)
    assert loan.address == 1 and loan.liquidation_events == [1]


def test_loan_events_partition_debt_events(golden):
    ledger, _, _, spb = golden
    loans = reconstruct_loans(ledger, spb)
    seqs = [s for l in loans for s in l.draw_events + l.repay_events + l.liquidation_events]
    debt_seqs = [e.seq for e in ledger if e.kind in (K.Borrow, K.Repay, K.LiquidateRepay)]
    assert sorted(seqs) == debt_seqs


# --- redeposits --------------------------------------------------------------


def test_deposit_before_draw_not_counted():
    l = led(ev(1, 1, K.Deposit, DAI, 100), ev(2, 1, K.Borrow, DAI, 100, debt=100))
    (d,) = detect_redeposits(l, seconds_per_block=SPB)
    assert not d.redeposited_same_day and not d.redeposited_within_1d


def test_other_token_deposit_not_counted():
    l = led(ev(1, 1, K.Borrow, DAI, 100, debt=100), ev(2, 1, K.Deposit, USDC, 100))
    (d,) = detect_redeposits(l, seconds_per_block=SPB)
    assert not d.redeposited_within_1d


def test_window_crosses_midnight():
    l = led(ev(23, 1, K.Borrow, DAI, 100, debt=100), ev(25, 1, K.Deposit, DAI, 100))
    (d,) = detect_redeposits(l, seconds_per_block=SPB)
    assert (d.redeposited_same_day, d.redeposited_within_1d) == (False, True)


def test_window_monotone(golden):
    ledger, _, _, spb = golden
    prev = -1
    for w in (0, 3600, 7200, 43200, 86400, 172800, 10 ** 7):
        n = sum(d.redeposited_within_1d for d in detect_redeposits(ledger, w, spb))
        assert n >= prev
        prev = n


def test_leverage_loop_fully_flagged(scenarios_dir):
    from lendsim.engine import run
    from lendsim.scenario import load_scenario

    cfg = load_scenario(scenarios_dir / "basic.json")
    out = run(cfg)
    loopers = {a for a, c in out.categories.items() if c is AgentCategory.YieldAggregator}
    days = [d for d in detect_redeposits(out.ledger, seconds_per_block=cfg.seconds_per_block)
            if d.address in loopers]
    assert loopers and days
    assert all(d.redeposited_same_day and d.redeposited_within_1d for d in days)


# --- concentration and micro -----------------------------------------------------


def test_top_k_share_examples():
    vols = {1: 75 * WAD, 2: 15 * WAD, 3: 10 * WAD}
    assert top_k_share(vols, 1) == 0.75
    assert top_k_share(vols, 2) == 0.90
    assert top_k_share(vols, 3) == 1.0 and top_k_share(vols, 10) == 1.0


def test_top_k_share_scale_invariant():
    vols = {1: 7 * WAD, 2: 3 * WAD, 3: 11 * WAD}
    scaled = {a: v * 1000 for a, v in vols.items()}
    for k in (1, 2, 3):
        assert top_k_share(vols, k) == pytest.approx(top_k_share(scaled, k), rel=1e-15)


def test_top_k_share_pareto_sort_oracle():
    rng = np.random.default_rng(3)
    raw = (rng.pareto(1.2, 10000) + 1) * 1000
    vols = {i: int(x * WAD) for i, x in enumerate(raw)}
    ranked = sorted(vols.values(), reverse=True)
    for k in (1, 10, 100, 1000):
        assert top_k_share(vols, k) == pytest.approx(float(Fraction(sum(ranked[:k]), sum(ranked))), rel=1e-12)


def test_concentration_errors():
    with pytest.raises(AnalyticsError):
        top_k_share({1: WAD}, 0)
    with pytest.raises(AnalyticsError):
        top_k_share({}, 1)
    with pytest.raises(AnalyticsError):
        address_volumes(Ledger(), "withdrawals")


def test_micro_filter_examples():
    l = led(ev(0, 1, K.Deposit, DAI, 3), ev(0, 2, K.Deposit, DAI, 3.01),
            ev(0, 3, K.Deposit, ETH, 1, amount=0.0005), ev(0, 4, K.Deposit, USDC, 1),
            ev(1, 4, K.Withdraw, USDC, 1), ev(2, 5, K.Borrow, DAI, 1, debt=1))
    assert micro_filter(l, TOKENS) == {1}


def test_micro_counterparty_counts_as_history():
    l = led(ev(0, 1, K.Deposit, DAI, 2), ev(1, 2, K.Swap, DAI, 5, cp=1))
    assert micro_filter(l, TOKENS) == set()


# --- flow network and liquidation matrix -------------------------------------


def test_flow_network_examples():
    cats = {1: AgentCategory.SmallAddress, 2: AgentCategory.LiquidatorBot, 3: AgentCategory.DecentralizedExchange}
    l = led(ev(0, 1, K.Deposit, DAI, 100), ev(1, 1, K.Deposit, ETH, 2000, amount=1),
            ev(2, 1, K.Borrow, USDC, 40, debt=40), ev(3, 3, K.Swap, USDC, 30, cp=1),
            ev(4, 1, K.Withdraw, DAI, 20))
    g = flow_network(l, cats, TOKENS)
    assert network_edges(g) == [
        ("DecentralizedExchange", "SmallAddress", 30 * WAD),
        ("LendingPool", "SmallAddress", 60 * WAD),
        ("SmallAddress", "LendingPool", 100 * WAD),
    ]
    assert g["SmallAddress"][LENDING_POOL]["weight"] == 100.0


def test_flow_network_missing_category():
    with pytest.raises(AnalyticsError):
        flow_network(led(ev(0, 1, K.Deposit, DAI, 1)), {}, TOKENS)


def test_liquidation_matrix_unpaired_raises():
    with pytest.raises(AnalyticsError):
        liquidation_matrix(led(ev(0, 2, K.LiquidateRepay, DAI, 10, cp=1, debt=0)), TOKENS)
    with pytest.raises(AnalyticsError):
        liquidation_matrix(led(ev(0, 2, K.LiquidateSeize, ETH, 10, cp=1, amount=0.005)), TOKENS)


def test_liquidation_matrix_empty_ledger_zero():
    m = liquidation_matrix(Ledger(), TOKENS)
    assert list(m.index) == ["ETH", "DAI", "USDC", "total"]
    assert all(v == 0 for v in m.to_numpy().ravel())


def test_crash_matrix_total_equals_repaid(scenarios_dir):
    from lendsim.engine import run
    from lendsim.scenario import load_scenario, scenario_dict, set_path, validate_scenario

    d = scenario_dict(load_scenario(scenarios_dir / "crash.json"))
    out = run(validate_scenario(set_path(d, "oracle.shocks.0.multiplier", 0.5)))
    m = liquidation_matrix(out.ledger, out.tokens)
    repaid = sum(e.usd_value for e in out.ledger if e.kind is K.LiquidateRepay)
    assert repaid > 0 and m.loc["total", "total"] == repaid
