"""bgcosim: building-grid co-simulation and workflow-orchestration toolkit.

Subsystems: electrical network model + Newton-Raphson power flow (network,
netfile), grid security metrics (analysis), building fleet models
(buildings), the co-simulation step loop (cosim), droop policies and a
derivative-free trainer (policy), DAG-structured codebase machinery (dag),
the constraint-driven refinement loop (tgd), and task-spec driven runs
(taskspec, cli).
"""

__version__ = "0.1.0"

from bgcosim._kernels import BACKEND as solver_backend

__all__ = ["solver_backend", "__version__"]
