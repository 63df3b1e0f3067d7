"""End-to-end training recipe: outlier filter, split, normalize, train, calibrate."""

import logging
from dataclasses import dataclass, replace

from . import autoenc, detector
from .datasets import apply_normalizer, filter_outliers, fit_normalizer, normalize_dataset, split

log = logging.getLogger(__name__)


@dataclass
class TrainingRun:
    model: autoenc.AutoencoderModel
    history: autoenc.TrainHistory
    train: object
    validation: object
    test: object
    sweep: detector.SweepTable = None
    leaderboard: list = None
    hyperparams: autoenc.Hyperparams = None


def train_detector(ds, hp=None, seed=0, train_fraction=0.75, val_fraction=0.2, outlier_k=1.5,
                   search_space=None, trials=0, shrink=0.0, drop_layers=False, calibrate=True,
                   n_jobs=1):
    """Fit a detector on ``ds`` and return the model with its held-out test split.

    The autoencoder only ever sees benign rows. ``train_fraction`` of the
    (outlier-filtered) data is used for fitting and ``val_fraction`` of that part
    is held back for validation loss, hyperparameter search and threshold
    calibration. The remaining rows form the test split, returned unnormalized.
    """
    hp = hp or autoenc.Hyperparams(spec=autoenc.default_architecture(len(ds.feature_names)), seed=seed)
    if outlier_k:
        before = len(ds)
        ds = filter_outliers(ds, outlier_k)
        log.info("outlier filter kept %d of %d rows", len(ds), before)
    fit_part, test = split(ds, train_fraction, seed)
    train_part, val_part = split(fit_part, 1.0 - val_fraction, seed + 1)

    norm = fit_normalizer(train_part.subset(train_part.benign_mask))
    train_n = normalize_dataset(norm, train_part)
    val_n = normalize_dataset(norm, val_part)
    benign_train = train_n.X[train_n.benign_mask]
    benign_val = val_n.X[val_n.benign_mask]

    leaderboard = None
    if trials and search_space is not None:
        hp, leaderboard = autoenc.random_search(search_space, trials, benign_train, benign_val,
                                                seed=seed, n_jobs=n_jobs)
        log.info("random search best: lr=%.4f epochs=%d batch=%d arch=%s",
                 hp.learning_rate, hp.epochs, hp.batch_size, hp.spec.describe())
    if shrink or drop_layers:
        hp = replace(hp, spec=autoenc.shrink_architecture(hp.spec, shrink, drop_layers))

    model, history = autoenc.train(benign_train, hp, val_rows=benign_val,
                                   normalization=norm, feature_names=ds.feature_names)
    sweep = None
    if calibrate and val_n.attack_mask.any():
        theta, sweep = detector.calibrate_threshold(model, benign_val, val_n.X[val_n.attack_mask])
        model.threshold = theta
    return TrainingRun(model, history, train_part, val_part, test, sweep, leaderboard, hp)


def evaluate_raw(model, test, cfg=None):
    """Evaluate on unnormalized rows using the model's own normalization."""
    cfg = cfg or detector.DetectorConfig.from_model(model)
    normalized = test if model.normalization is None else normalize_dataset(model.normalization, test)
    return detector.evaluate(model, cfg, normalized)


def normalize_rows(model, X):
    return X if model.normalization is None else apply_normalizer(model.normalization, X)
