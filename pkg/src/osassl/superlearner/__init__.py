"""One-step-ahead sequential super learning."""

from .ledger import RiskLedger, penalized_risk, select_discrete, update_ledger
from .methods import (
    Average, AverageMethod, DiscreteMethod, LearnerMethod, Linear, Median, MedianMethod, Method, NetMethod,
    RidgeStackMethod, Select, Weighted, build_methods,
)
from .oracle import ExcessGap, OracleProbe, excess_gap, oracle_select, true_risk
from .schedule import ForecastReport, MetaPredictor, ScheduleConfig, forecast_total, probe_summary, run_schedule
from .simplex import NetLedger, SimplexWeights, epsilon_net, net_matrix, net_size, select_continuous

__all__ = [
    "Average", "AverageMethod", "DiscreteMethod", "ExcessGap", "ForecastReport", "LearnerMethod", "Linear",
    "Median", "MedianMethod", "MetaPredictor", "Method", "NetLedger", "NetMethod", "OracleProbe",
    "RidgeStackMethod", "RiskLedger", "ScheduleConfig", "Select", "SimplexWeights", "Weighted", "build_methods",
    "epsilon_net", "excess_gap", "forecast_total", "net_matrix", "net_size", "oracle_select", "penalized_risk",
    "probe_summary", "run_schedule", "select_continuous", "select_discrete", "true_risk", "update_ledger",
]
