from .config import Cell, DetectorMode, ExperimentPlan, curve_plans, load_config, table_plan
from .runner import run_cell, run_curves, run_table
