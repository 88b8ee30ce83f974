"""stepnav: hierarchical subgoal navigation for a reduced-order biped.

Public API:
    from stepnav.world import generate_environment, render_local_grid
    from stepnav.lip import LipParams, LipState, step_map
    from stepnav.lmpc import LipMpcPlanner, Subgoal
    from stepnav.sim import run_episode, evaluate
    from stepnav.train import train

Intentionally imports nothing on package load to avoid side effects
(frictionless, matplotlib, shapely) where only one module is needed.
"""

__version__ = "0.1.0"
