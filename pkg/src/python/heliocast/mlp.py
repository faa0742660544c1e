"""
Single hidden layer perceptron trained with full-batch momentum descent.

Initialisation draws from ``numpy.random.Generator(PCG64(seed))``, so a given
(dataset, spec) always yields the same parameters.
"""
from pathlib import Path
from typing import List, NamedTuple, Optional, Tuple, Union

import numpy as np
from loguru import logger

from heliocast.errors import InsufficientDataError, TrainingDivergedError
from heliocast.schemas import MlpModel, TrainResult, TrainSpec

MIN_TRAIN_PAIRS = 100
MODEL_FORMAT = "heliocast-mlp"
MODEL_FORMAT_VERSION = 1
FD_STEP = 1e-5


class Params(NamedTuple):
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float


def _params(model: MlpModel) -> Params:
    return Params(
        np.array(model.w1, copy=True), np.array(model.b1, copy=True),
        np.array(model.w2, copy=True), float(model.b2),
    )


def _model(params: Params, template: MlpModel) -> MlpModel:
    return template.model_copy(update={
        "w1": _readonly(params.w1), "b1": _readonly(params.b1),
        "w2": _readonly(params.w2), "b2": float(params.b2),
    })


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64, copy=True)
    array.setflags(write=False)
    return array


def init_model(
        n_lags: int,
        n_hidden: int,
        seed: int = 0,
        input_scale: float = 1.0,
        output_scale: float = 1.0,
) -> MlpModel:
    rng = np.random.Generator(np.random.PCG64(seed))
    return MlpModel(
        layer_sizes=(n_lags, n_hidden, 1),
        w1=rng.uniform(-0.5, 0.5, size=(n_hidden, n_lags)),
        b1=rng.uniform(-0.5, 0.5, size=n_hidden),
        w2=rng.uniform(-0.5, 0.5, size=n_hidden),
        b2=float(rng.uniform(-0.5, 0.5)),
        input_scale=input_scale,
        output_scale=output_scale,
    )


def _forward_scaled(params: Params, xs: np.ndarray):
    hidden = np.tanh(xs @ params.w1.T + params.b1)
    return hidden, hidden @ params.w2 + params.b2


def _backward(params: Params, xs: np.ndarray, ys: np.ndarray) -> Tuple[float, Params]:
    """Mean squared error and its gradient, everything in scaled units."""
    hidden, out = _forward_scaled(params, xs)
    residual = out - ys
    loss = float(np.mean(residual ** 2))

    d_out = 2.0 * residual / len(ys)
    d_w2 = hidden.T @ d_out
    d_b2 = float(d_out.sum())
    d_pre = np.outer(d_out, params.w2) * (1.0 - hidden ** 2)
    d_w1 = d_pre.T @ xs
    d_b1 = d_pre.sum(axis=0)
    return loss, Params(d_w1, d_b1, d_w2, d_b2)


def _check_inputs(model: MlpModel, inputs: np.ndarray):
    if inputs.shape[-1] != model.n_lags:
        msg = f"expected {model.n_lags} lags, got {inputs.shape[-1]}"
        logger.error(msg)
        raise ValueError(msg)
    if not np.all(np.isfinite(inputs)):
        msg = "lag vector is not finite"
        logger.error(msg)
        raise ValueError(msg)


def predict(model: MlpModel, inputs: np.ndarray) -> np.ndarray:
    """Batched forward pass, one row of lags per prediction."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    _check_inputs(model, inputs)
    _, out = _forward_scaled(_params(model), inputs / model.input_scale)
    return out * model.output_scale


def forward(model: MlpModel, lags) -> float:
    lags = np.asarray(lags, dtype=np.float64)
    if lags.ndim != 1:
        raise ValueError(f"expected a single lag vector, got shape {lags.shape}")
    return float(predict(model, lags[None, :])[0])


def _validation_errors(model_params: Params, xs: np.ndarray, ys: np.ndarray, output_scale: float):
    _, out = _forward_scaled(model_params, xs)
    rmse = float(np.sqrt(np.mean(((out - ys) * output_scale) ** 2)))
    rms = float(np.sqrt(np.mean((ys * output_scale) ** 2)))
    return rmse, (rmse / rms if rms > 0 else None)


def train(
        inputs: np.ndarray,
        targets: np.ndarray,
        spec: TrainSpec,
        input_scale: float = 1.0,
        output_scale: float = 1.0,
) -> TrainResult:
    """Train on the chronological head, early-stop on the tail.

    Returns the parameters of the epoch with the lowest validation RMSE.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if len(inputs) != len(targets):
        raise ValueError(f"{len(inputs)} lag vectors for {len(targets)} targets")
    if len(targets) < MIN_TRAIN_PAIRS:
        msg = f"training needs at least {MIN_TRAIN_PAIRS} pairs, got {len(targets)}"
        logger.error(msg)
        raise InsufficientDataError(msg)
    if inputs.ndim != 2 or inputs.shape[1] != spec.n_lags:
        raise ValueError(f"expected lag vectors of length {spec.n_lags}, got shape {inputs.shape}")

    n_val = max(1, int(round(len(targets) * spec.validation_fraction)))
    xs = inputs / input_scale
    ys = targets / output_scale
    x_fit, y_fit = xs[:-n_val], ys[:-n_val]
    x_val, y_val = xs[-n_val:], ys[-n_val:]

    template = init_model(spec.n_lags, spec.n_hidden, spec.seed, input_scale, output_scale)
    params = _params(template)
    velocity = Params(np.zeros_like(params.w1), np.zeros_like(params.b1), np.zeros_like(params.w2), 0.0)

    best = params
    best_rmse, best_nrmse = _validation_errors(params, x_val, y_val, output_scale)
    stale = 0
    epoch = 0
    for epoch in range(1, spec.max_epochs + 1):
        loss, grads = _backward(params, x_fit, y_fit)
        if not np.isfinite(loss):
            msg = f"training diverged at epoch {epoch} (seed {spec.seed})"
            logger.warning(msg)
            raise TrainingDivergedError(msg)

        velocity = Params(*(spec.momentum * v - spec.learning_rate * g for v, g in zip(velocity, grads)))
        params = Params(*(p + v for p, v in zip(params, velocity)))

        rmse, nrmse = _validation_errors(params, x_val, y_val, output_scale)
        if not np.isfinite(rmse):
            msg = f"validation error is not finite at epoch {epoch} (seed {spec.seed})"
            logger.warning(msg)
            raise TrainingDivergedError(msg)
        if rmse < best_rmse:
            best, best_rmse, best_nrmse, stale = params, rmse, nrmse, 0
        else:
            stale += 1
            if stale >= spec.patience:
                break

    logger.debug(f"seed {spec.seed}: validation rmse {best_rmse:.6g} after {epoch} epochs")
    return TrainResult(
        model=_model(best, template),
        seed=spec.seed,
        validation_rmse=best_rmse,
        validation_nrmse=best_nrmse,
        epochs_run=epoch,
    )


def best_of_runs(
        inputs: np.ndarray,
        targets: np.ndarray,
        spec: TrainSpec,
        n_runs: int = 7,
        input_scale: float = 1.0,
        output_scale: float = 1.0,
) -> TrainResult:
    """Train with seeds spec.seed .. spec.seed + n_runs - 1 and keep the best validation run.

    Ties go to the earliest seed.
    """
    if n_runs < 1:
        raise ValueError(f"n_runs must be at least 1, got {n_runs}")

    results: List[TrainResult] = []
    for offset in range(n_runs):
        run_spec = spec.model_copy(update={"seed": spec.seed + offset})
        try:
            results.append(train(inputs, targets, run_spec, input_scale, output_scale))
        except TrainingDivergedError:
            logger.warning(f"run with seed {run_spec.seed} diverged, discarded")
    if not results:
        msg = f"all {n_runs} training runs diverged"
        logger.error(msg)
        raise TrainingDivergedError(msg)

    chosen = min(results, key=lambda r: r.validation_rmse)
    logger.info(
        f"best of {n_runs} runs: seed {chosen.seed}, validation rmse {chosen.validation_rmse:.6g}"
    )
    return chosen


# ------- gradient verification ------- #

def _flatten(params: Params) -> np.ndarray:
    return np.concatenate([params.w1.ravel(), params.b1, params.w2, [params.b2]])


def _unflatten(flat: np.ndarray, like: Params) -> Params:
    n_w1, n_h = like.w1.size, like.b1.size
    return Params(
        flat[:n_w1].reshape(like.w1.shape),
        flat[n_w1:n_w1 + n_h],
        flat[n_w1 + n_h:n_w1 + 2 * n_h],
        float(flat[-1]),
    )


def gradient_errors(model: MlpModel, lags, target: float = 0.0) -> np.ndarray:
    """Relative error between backprop and central differences, per parameter.

    The loss is the single-sample squared error in scaled units.
    """
    xs = np.asarray(lags, dtype=np.float64)[None, :] / model.input_scale
    _check_inputs(model, xs)
    ys = np.array([target / model.output_scale])

    params = _params(model)
    _, grads = _backward(params, xs, ys)
    analytic = _flatten(grads)

    flat = _flatten(params)
    numeric = np.empty_like(flat)
    for k in range(flat.size):
        shifted = flat.copy()
        shifted[k] = flat[k] + FD_STEP
        up, _ = _backward(_unflatten(shifted, params), xs, ys)
        shifted[k] = flat[k] - FD_STEP
        down, _ = _backward(_unflatten(shifted, params), xs, ys)
        numeric[k] = (up - down) / (2 * FD_STEP)

    return np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), 1e-6)


def gradient_check(model: MlpModel, lags, target: float = 0.0) -> float:
    return float(gradient_errors(model, lags, target).max())


# ------- datasets ------- #

def lag_matrix(values: np.ndarray, issue_indices: np.ndarray, n_lags: int) -> np.ndarray:
    """Row k holds values[i - n_lags + 1 .. i] for i = issue_indices[k]."""
    offsets = np.arange(-n_lags + 1, 1)
    return values[np.asarray(issue_indices)[:, None] + offsets[None, :]]


def lags_available(valid: np.ndarray, issue_indices: np.ndarray, n_lags: int) -> np.ndarray:
    issue_indices = np.asarray(issue_indices)
    inside = issue_indices >= n_lags - 1
    result = np.zeros(len(issue_indices), dtype=bool)
    if inside.any():
        result[inside] = lag_matrix(valid, issue_indices[inside], n_lags).all(axis=1)
    return result


def build_dataset(
        values: np.ndarray,
        valid: np.ndarray,
        n_lags: int,
        horizon_steps: int,
        issue_mask: Optional[np.ndarray] = None,
        target_valid: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Chronological (lags, target) pairs with every lag and the target valid.

    ``target_valid`` overrides ``valid`` for the target slot.
    """
    if target_valid is None:
        target_valid = valid
    n = len(values)
    issues = np.arange(n_lags - 1, n - horizon_steps)
    if issue_mask is not None:
        issues = issues[issue_mask[issues]]
    keep = lags_available(valid, issues, n_lags) & target_valid[issues + horizon_steps]
    issues = issues[keep]
    return lag_matrix(values, issues, n_lags), values[issues + horizon_steps]


# ------- persistence ------- #

def _format(values) -> str:
    return " ".join(f"{float(v):.17g}" for v in np.ravel(values))


def dumps_model(model: MlpModel) -> str:
    lines = [
        f"{MODEL_FORMAT} {MODEL_FORMAT_VERSION}",
        "layer_sizes " + " ".join(str(n) for n in model.layer_sizes),
        f"input_scale {_format([model.input_scale])}",
        f"output_scale {_format([model.output_scale])}",
        f"w1 {_format(model.w1)}",
        f"b1 {_format(model.b1)}",
        f"w2 {_format(model.w2)}",
        f"b2 {_format([model.b2])}",
    ]
    return "\n".join(lines) + "\n"


def loads_model(text: str) -> MlpModel:
    lines = [line.split() for line in text.splitlines() if line.strip()]
    if not lines or lines[0] != [MODEL_FORMAT, str(MODEL_FORMAT_VERSION)]:
        msg = f"not a {MODEL_FORMAT} v{MODEL_FORMAT_VERSION} file"
        logger.error(msg)
        raise ValueError(msg)
    fields = {line[0]: line[1:] for line in lines[1:]}
    try:
        n_lags, n_hidden, n_out = (int(v) for v in fields["layer_sizes"])
        return MlpModel(
            layer_sizes=(n_lags, n_hidden, n_out),
            input_scale=float(fields["input_scale"][0]),
            output_scale=float(fields["output_scale"][0]),
            w1=np.array(fields["w1"], dtype=np.float64).reshape(n_hidden, n_lags),
            b1=np.array(fields["b1"], dtype=np.float64),
            w2=np.array(fields["w2"], dtype=np.float64),
            b2=float(fields["b2"][0]),
        )
    except (KeyError, IndexError) as exc_info:
        msg = f"model file is missing {exc_info}"
        logger.error(msg)
        raise ValueError(msg)


def save_model(model: MlpModel, path: Union[str, Path]):
    Path(path).write_text(dumps_model(model))
    logger.info(f"model {model.layer_sizes} written to {path}")


def load_model(path: Union[str, Path]) -> MlpModel:
    return loads_model(Path(path).read_text())
