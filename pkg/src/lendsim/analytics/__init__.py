"""Measurement procedures over event ledgers."""

from .features import EQ4_COLUMNS, EQ5_COLUMNS, FeatureMatrix, InsufficientHistory, build_features, daily_table, snapshot_frame
from .flows import (LENDING_POOL, AnalyticsError, address_volumes, concentration, flow_network,
                    liquidation_matrix, micro_filter, network_edges, top_k_share)
from .loans import ClosedLoan, Loan, LoanDay, detect_redeposits, reconstruct_closed_loans, reconstruct_loans
from .regression import (ConvergenceFailure, PerfectSeparation, RankDeficient, RegressionError,
                         RegressionResult, format_table, logistic_clustered, newey_west_meat, ols_newey_west)
from .tables import redeposit_design, summary_tables

__all__ = [
    "EQ4_COLUMNS", "EQ5_COLUMNS", "FeatureMatrix", "InsufficientHistory", "build_features", "daily_table", "snapshot_frame",
    "LENDING_POOL", "AnalyticsError", "address_volumes", "concentration", "flow_network",
    "liquidation_matrix", "micro_filter", "network_edges", "top_k_share",
    "ClosedLoan", "Loan", "LoanDay", "detect_redeposits", "reconstruct_closed_loans", "reconstruct_loans",
    "ConvergenceFailure", "PerfectSeparation", "RankDeficient", "RegressionError", "RegressionResult",
    "format_table", "logistic_clustered", "newey_west_meat", "ols_newey_west",
    "redeposit_design", "summary_tables",
]
