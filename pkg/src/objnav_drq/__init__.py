"""Object-goal navigation with a data-regularised soft actor-critic goal policy.

A modular agent: a semantic map built from depth rays, a learned policy
that picks long-term map goals, and a fast-marching local planner.
"""
from .agent import EpisodeConfig, ModularAgent, RandomAgent, make_episode, run_episode
from .config import RunConfig, load_config, parse_config
from .drq import DrQLearner, LearnerConfig, ReplayBuffer, Transition
from .estimator import ObjectNavDrQ
from .fmm import extract_action, extract_path, fmm_solve
from .metrics import dts, spl, success_rate, summarize
from .networks import NetConfig
from .scene import Action, Scene, SceneConfig, generate_scene

__version__ = "0.1.0"

__all__ = [
    "Action", "DrQLearner", "EpisodeConfig", "LearnerConfig", "ModularAgent", "NetConfig",
    "ObjectNavDrQ", "RandomAgent", "ReplayBuffer", "RunConfig", "Scene", "SceneConfig",
    "Transition", "dts", "extract_action", "extract_path", "fmm_solve", "generate_scene",
    "load_config", "make_episode", "parse_config", "run_episode", "spl", "success_rate",
    "summarize",
]
