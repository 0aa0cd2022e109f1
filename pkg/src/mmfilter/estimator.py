"""scikit-learn style front end."""

from __future__ import annotations

import dataclasses
import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .data import Utterance, check_dataset
from .encoders import MODALITIES
from .exceptions import DataError
from .metrics import MetricsReport, compute_metrics
from .model import TrainConfig, build_params, encoder_config
from .modelfile import load_model, save_model
from .training import Adam, fit, predict_batches


def check_utterances(X, y=None, input_dims: dict | None = None) -> list[Utterance]:
    """Validate a dataset (optionally relabelling it with ``y``)."""
    if isinstance(X, Utterance):
        raise DataError("expected a sequence of utterances, got a single Utterance")
    X = list(X) if X is not None else []
    check_dataset(X, input_dims)
    if y is not None:
        y = np.asarray(y, dtype=np.float64).ravel()
        if y.shape[0] != len(X):
            raise DataError(f"{len(X)} utterances but {y.shape[0]} labels")
        X = [dataclasses.replace(u, label=float(v)) for u, v in zip(X, y)]
        check_dataset(X, input_dims)
    return X


class MultimodalRegressor(RegressorMixin, BaseEstimator):
    """Sentiment regressor over (language, acoustic, visual) sequences.

    Training alternates, per batch, an update of the unimodal encoders under
    modulated unimodal losses and an update of the whole model under the
    multimodal loss. ``X`` is a sequence of :class:`~mmfilter.data.Utterance`;
    labels come from the utterances unless ``y`` is given.

    Ablations: ``modulation=False`` (no ML), ``filter_mode="none"`` (no MFM),
    ``baseline=False`` (no BE).
    """

    def __init__(
        self,
        d=16,
        kernel_size=3,
        n_layers=1,
        fusion="addition",
        filter_mode="soft",
        baseline=True,
        per_modality_filter=False,
        modulation=True,
        modulation_eps=1e-8,
        lam=1000.0,
        lam_start=1.0,
        lam_warmup_epochs=10,
        penalty_weight=0.1,
        hc_beta=2.0 / 3.0,
        hc_zeta=1.1,
        hc_gamma=-0.1,
        learning_rate=1e-3,
        batch_size=32,
        epochs=20,
        adam_beta1=0.9,
        adam_beta2=0.999,
        adam_eps=1e-8,
        phase_schedule="batch",
        freeze_classifier_phase1=False,
        seed=0,
        zero_policy="exclude",
        verbose=False,
    ):
        self.d = d
        self.kernel_size = kernel_size
        self.n_layers = n_layers
        self.fusion = fusion
        self.filter_mode = filter_mode
        self.baseline = baseline
        self.per_modality_filter = per_modality_filter
        self.modulation = modulation
        self.modulation_eps = modulation_eps
        self.lam = lam
        self.lam_start = lam_start
        self.lam_warmup_epochs = lam_warmup_epochs
        self.penalty_weight = penalty_weight
        self.hc_beta = hc_beta
        self.hc_zeta = hc_zeta
        self.hc_gamma = hc_gamma
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.adam_beta1 = adam_beta1
        self.adam_beta2 = adam_beta2
        self.adam_eps = adam_eps
        self.phase_schedule = phase_schedule
        self.freeze_classifier_phase1 = freeze_classifier_phase1
        self.seed = seed
        self.zero_policy = zero_policy
        self.verbose = verbose

    def _make_config(self) -> TrainConfig:
        params = self.get_params()
        return TrainConfig(**{k: params[k] for k in TrainConfig.field_names()})

    @classmethod
    def from_config(cls, cfg: TrainConfig, **kwargs) -> "MultimodalRegressor":
        return cls(**dataclasses.asdict(cfg), **kwargs)

    def fit(self, X, y=None, eval_set=None, log=None):
        cfg = self._make_config()
        X = check_utterances(X, y)
        dims = {m: X[0].sequence(m).shape[1] for m in MODALITIES}
        if eval_set is not None:
            eval_set = check_utterances(eval_set, input_dims=dims)
        rng = np.random.default_rng(cfg.seed)
        self.config_ = cfg
        self.input_dims_ = dims
        self.encoder_config_ = encoder_config(cfg, dims)
        self.params_ = build_params(cfg, dims, rng)
        self.optimizer_ = Adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        if log is None and self.verbose:
            log = print
        self.history_ = fit(X, self.params_, self.encoder_config_, cfg, eval_set, self.optimizer_, rng, log)
        return self

    def _forward(self, X):
        check_is_fitted(self, "params_")
        X = check_utterances(X, input_dims=self.input_dims_)
        return X, predict_batches(X, self.params_, self.encoder_config_, self.config_)

    def predict(self, X) -> np.ndarray:
        return self._forward(X)[1][0]

    def transform(self, X) -> np.ndarray:
        """Fused multimodal embeddings, shape (n_utterances, d)."""
        return self._forward(X)[1][1]

    def filter_decisions(self, X) -> dict:
        """Per-modality keep / replace / penalty arrays ({} without a filter)."""
        return self._forward(X)[1][2]

    def evaluate(self, X, y=None) -> MetricsReport:
        X = check_utterances(X, y)
        preds = self.predict(X)
        return compute_metrics(preds, [u.label for u in X], self.config_.zero_policy)

    def parameter_count(self, prefix: str = "") -> int:
        check_is_fitted(self, "params_")
        return self.params_.count(prefix)

    def save(self, path) -> None:
        check_is_fitted(self, "params_")
        save_model(path, self.params_, self.config_, self.input_dims_)

    @classmethod
    def load(cls, path) -> "MultimodalRegressor":
        store, cfg, dims = load_model(path)
        est = cls.from_config(cfg)
        est.config_ = cfg
        est.input_dims_ = dims
        est.encoder_config_ = encoder_config(cfg, dims)
        est.params_ = store
        est.history_ = []
        return est
