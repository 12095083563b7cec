"""scikit-learn style wrapper around a training run.

``fit`` takes training scenes (or their seeds), ``predict`` maps
(state, goal category) pairs to long-term goal actions, and ``score``
returns the success rate of the full modular agent on held-out scenes.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import tensor as T
from . import networks as nets
from .config import RunConfig
from .experiment import evaluate, train, trained_agent
from .metrics import summarize
from .scene import generate_scene
from .validation import check_goals, check_scenes, check_states


class ObjectNavDrQ(BaseEstimator):

    def __init__(self, steps=30000, augment="shift", flip_prob=0.1, k_aug=2, m_aug=2,
                 batch_size=8, feature_dim=50, hidden_dim=1024, n_categories=6, map_size=64,
                 precision="float64", eval_episodes=100, random_state=0):
        self.steps = steps
        self.augment = augment
        self.flip_prob = flip_prob
        self.k_aug = k_aug
        self.m_aug = m_aug
        self.batch_size = batch_size
        self.feature_dim = feature_dim
        self.hidden_dim = hidden_dim
        self.n_categories = n_categories
        self.map_size = map_size
        self.precision = precision
        self.eval_episodes = eval_episodes
        self.random_state = random_state

    def run_config(self) -> RunConfig:
        params = self.get_params()
        seed = params.pop("random_state")
        params.pop("eval_episodes")
        return RunConfig(seed=0 if seed is None else int(seed), **params)

    def _scenes(self, X, cfg):
        scfg = cfg.scene_config()
        return check_scenes(X, lambda seed: generate_scene(scfg, seed))

    def fit(self, X, y=None, progress=None):
        """Train on scenes ``X`` (Scene objects or seeds); ``y`` is ignored."""
        cfg = self.run_config()
        scenes = self._scenes(X, cfg)
        result = train(cfg, scenes=scenes, progress=progress)
        self.learner_ = result.learner
        self.history_ = result.rows
        self.n_env_steps_ = result.env_steps
        self.n_updates_ = result.updates
        return self

    def predict(self, X, goals):
        """Deterministic goal actions in (-1, 1)^2, shape (N, 2)."""
        check_is_fitted(self, "learner_")
        states = check_states(X, self.n_categories, self.map_size)
        g = check_goals(goals, len(states), self.n_categories)
        learner = self.learner_
        with T.default_dtype(learner.dtype):
            trunk = nets.conv_trunk(learner.params, states, "encoder", learner.net_cfg)
            feats = nets.encoder_head(learner.params, trunk, "actor_encoder")
            a, _ = nets.actor_sample(learner.params, feats, g, learner.net_cfg, deterministic=True)
        return np.asarray(a.data, dtype=np.float64)

    def predict_cells(self, X, goals):
        """Goal actions mapped to (row, col) map cells."""
        return np.array([nets.goal_to_cell(a, self.map_size) for a in self.predict(X, goals)])

    def evaluate(self, X) -> dict:
        """success / spl / dts summary over ``eval_episodes`` per scene."""
        check_is_fitted(self, "learner_")
        cfg = self.run_config()
        scenes = self._scenes(X, cfg)
        results = evaluate({"trained": trained_agent(self.learner_)}, scenes, self.eval_episodes, cfg)
        return summarize(results["trained"], cfg.success_distance)

    def score(self, X, y=None):
        return self.evaluate(X)["success"]

