"""Networks, scenario trees, investment plans and their file formats."""

from .io import (GridFileError, ParseError, ValidationError, check_compatible, load_network,
                 load_tree, network_from_dict, network_to_dict, save_network, save_tree,
                 tree_from_dict, tree_to_dict)
from .plan import (PlanShapeError, PlanViolation, count_plans, enumerate_plans, validate_plan)
from .types import (SOLAR, THERMAL, WIND, Generator, InvestmentPlan, Line, Load, Network,
                    OperationalSolution, ScenarioTree, TreeNode, discount_factor, investment_cost)

__all__ = [
    "GridFileError", "ParseError", "ValidationError", "check_compatible", "load_network",
    "load_tree", "network_from_dict", "network_to_dict", "save_network", "save_tree",
    "tree_from_dict", "tree_to_dict", "PlanShapeError", "PlanViolation", "count_plans",
    "enumerate_plans", "validate_plan", "SOLAR", "THERMAL", "WIND", "Generator",
    "InvestmentPlan", "Line", "Load", "Network", "OperationalSolution", "ScenarioTree",
    "TreeNode", "discount_factor", "investment_cost",
]
