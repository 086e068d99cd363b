"""Linear small-signal analysis.

State-space models with named channels, eigenanalysis with biorthonormal
left/right eigenvectors, damping ratios, participation factors, residues,
first-order eigenvalue-shift prediction, lead-lag damping-controller
realization, feedback interconnection and exact-discretization step
responses.

Sign convention: ``close_loop`` subtracts the controller output at the
selected plant input (negative feedback).  ``predict_shift`` predicts the
first-order eigenvalue movement under that same convention, so its output
is directly comparable with an eigenvalue difference taken across a
``close_loop`` call.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as la

__all__ = [
    "SmallSignalError",
    "StateSpaceModel",
    "ControllerParams",
    "ModeSet",
    "ParticipationMatrix",
    "StepResponse",
    "DEFAULT_PARAM_BOUNDS",
    "default_params",
    "damping_ratio",
    "eigendecompose",
    "participation_factors",
    "residue",
    "controller_transfer",
    "realize_controller",
    "predict_shift",
    "close_loop",
    "step_response",
    "load_model",
    "save_model",
]


class SmallSignalError(ValueError):
    """Invalid model data or a failed linear-algebra contract."""


def _as_matrix(value, name):
    arr = np.array(value, dtype=float)
    if arr.ndim != 2:
        raise SmallSignalError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise SmallSignalError(f"{name} contains non-finite entries")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class StateSpaceModel:
    """Linear model dx/dt = a x + b u, y = c x + d u with named channels."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    state_names: tuple = ()
    input_names: tuple = ()
    output_names: tuple = ()

    def __post_init__(self):
        a = _as_matrix(self.a, "a")
        b = _as_matrix(self.b, "b")
        c = _as_matrix(self.c, "c")
        d = _as_matrix(self.d, "d")
        n = a.shape[0]
        if a.shape != (n, n):
            raise SmallSignalError(f"a must be square, got shape {a.shape}")
        if b.shape[0] != n:
            raise SmallSignalError(f"b has {b.shape[0]} rows, expected {n}")
        if c.shape[1] != n:
            raise SmallSignalError(f"c has {c.shape[1]} columns, expected {n}")
        if d.shape != (c.shape[0], b.shape[1]):
            raise SmallSignalError(
                f"d must be {c.shape[0]}x{b.shape[1]}, got {d.shape[0]}x{d.shape[1]}"
            )
        names = {
            "state_names": (self.state_names, n, "x"),
            "input_names": (self.input_names, b.shape[1], "u"),
            "output_names": (self.output_names, c.shape[0], "y"),
        }
        for attr, (given, count, prefix) in names.items():
            labels = tuple(given) if given else tuple(f"{prefix}{i}" for i in range(count))
            if len(labels) != count:
                raise SmallSignalError(f"{attr} has {len(labels)} entries, expected {count}")
            object.__setattr__(self, attr, labels)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    @property
    def n_states(self):
        return self.a.shape[0]

    @property
    def n_inputs(self):
        return self.b.shape[1]

    @property
    def n_outputs(self):
        return self.c.shape[0]

    def transfer(self, s):
        """Transfer matrix C (sI - A)^-1 B + D at one complex frequency."""
        n = self.n_states
        x = la.solve(s * np.eye(n) - self.a, self.b)
        return self.c @ x + self.d


# Tuning boxes for the five lead-lag controller parameters; the washout
# time constant is normally held fixed and gets a wide permissive box.
DEFAULT_PARAM_BOUNDS = {
    "k_m": (1.0, 30.0),
    "t_1": (0.1, 1.0),
    "t_2": (0.01, 0.1),
    "t_3": (0.1, 1.0),
    "t_4": (0.01, 0.1),
    "t_w": (0.5, 20.0),
}


@dataclass(frozen=True)
class ControllerParams:
    """Tunable damping-controller parameters: gain, four lead-lag time
    constants and the washout time constant (all seconds except k_m)."""

    k_m: float
    t_1: float
    t_2: float
    t_3: float
    t_4: float
    t_w: float = 5.0
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_PARAM_BOUNDS))

    def __post_init__(self):
        for name in ("t_1", "t_2", "t_3", "t_4", "t_w"):
            if not getattr(self, name) > 0:
                raise SmallSignalError(f"time constant {name} must be > 0")
        if self.k_m < 0:
            raise SmallSignalError("gain k_m must be >= 0")
        for name, (lo, hi) in self.bounds.items():
            value = getattr(self, name)
            if not lo <= value <= hi:
                raise SmallSignalError(
                    f"{name}={value:g} outside its bound interval [{lo:g}, {hi:g}]"
                )

    def with_values(self, **kwargs):
        """Copy with some parameter values replaced (bounds kept)."""
        return replace(self, **kwargs)

    def values(self, names=("k_m", "t_1", "t_2", "t_3", "t_4", "t_w")):
        return np.array([getattr(self, n) for n in names])


def default_params():
    """Mid-box defaults used wherever parameters are frozen.

    t_2 != t_4 keeps the controller poles distinct, which keeps the
    closed-loop eigenvector basis well conditioned.
    """
    return ControllerParams(k_m=1.0, t_1=0.3, t_2=0.05, t_3=0.25, t_4=0.06, t_w=5.0)


@dataclass(frozen=True)
class ModeSet:
    """Eigenstructure sorted by ascending damping ratio.

    Column i of ``right_vectors`` and row i of ``left_vectors`` belong to
    ``eigenvalues[i]`` and satisfy left @ right = I (biorthonormal).
    """

    eigenvalues: np.ndarray
    right_vectors: np.ndarray
    left_vectors: np.ndarray
    damping_ratios: np.ndarray
    frequencies_hz: np.ndarray
    state_names: tuple = ()
    warnings: tuple = ()

    @property
    def n_modes(self):
        return len(self.eigenvalues)

    def oscillatory(self, imag_tol=1e-9):
        """Indices of oscillatory modes, one per conjugate pair (Im > 0)."""
        return np.flatnonzero(self.eigenvalues.imag > imag_tol)


@dataclass(frozen=True)
class ParticipationMatrix:
    """State-by-mode participation magnitudes; columns sum to 1."""

    values: np.ndarray
    state_names: tuple = ()


def damping_ratio(lam):
    """Damping ratio -Re(lam)/|lam| of one eigenvalue."""
    lam = complex(lam)
    if lam == 0:
        raise SmallSignalError("undamped zero eigenvalue")
    return -lam.real / abs(lam)


def _safe_damping(lam):
    # zero eigenvalues sort as marginally damped
    return 0.0 if lam == 0 else -lam.real / abs(lam)


def eigendecompose(model):
    """Eigenvalues with biorthonormal right/left eigenvectors.

    Modes come back sorted by ascending damping ratio (ties broken by
    ascending |Im|, positive imaginary part first).  A near-defective
    state matrix attaches a warning instead of failing.
    """
    a = np.asarray(model.a, dtype=float)
    n = a.shape[0]
    try:
        eigvals, vr = la.eig(a)
    except la.LinAlgError as exc:
        raise SmallSignalError(
            f"eigendecomposition did not converge for {n}x{n} state matrix: {exc}"
        ) from None

    # unit columns with a deterministic phase (largest entry real positive)
    norms = np.linalg.norm(vr, axis=0)
    vr = vr / norms
    lead = vr[np.argmax(np.abs(vr), axis=0), np.arange(n)]
    vr = vr * np.conj(lead / np.abs(lead))

    cond = np.linalg.cond(vr)
    warnings = ()
    if not np.isfinite(cond) or cond > 1e12:
        warnings = (
            f"near-defective state matrix: eigenvector condition {cond:.3e} exceeds 1e12",
        )
    try:
        vl = la.inv(vr)
    except la.LinAlgError as exc:
        raise SmallSignalError(
            f"eigenvector matrix of {n}x{n} state matrix is singular: {exc}"
        ) from None
    vl = vl + (np.eye(n) - vl @ vr) @ vl  # one refinement step
    resid = np.max(np.abs(vl @ vr - np.eye(n)))
    if resid > 1e-8 and not warnings:
        warnings = (f"biorthonormalization residual {resid:.3e} exceeds 1e-8",)

    zeta = np.array([_safe_damping(lam) for lam in eigvals])
    order = np.lexsort((-np.sign(eigvals.imag), np.abs(eigvals.imag), zeta))
    eigvals = eigvals[order]
    return ModeSet(
        eigenvalues=eigvals,
        right_vectors=vr[:, order],
        left_vectors=vl[order, :],
        damping_ratios=zeta[order],
        frequencies_hz=np.abs(eigvals.imag) / (2.0 * math.pi),
        state_names=model.state_names,
        warnings=warnings,
    )


def participation_factors(modes):
    """Participation magnitudes |t_si v_is| normalized per mode column."""
    raw = np.abs(modes.right_vectors * modes.left_vectors.T)
    sums = raw.sum(axis=0)
    if np.any(sums <= 0):
        raise SmallSignalError("degenerate eigenvector pair with zero participation")
    return ParticipationMatrix(values=raw / sums, state_names=modes.state_names)


def residue(model, mode_index, input_index=0, output_index=0, modes=None):
    """Residue of the selected input/output transfer function at one mode.

    Requires a simple eigenvalue: the relative gap to every other
    eigenvalue must exceed 1e-9.  Pass a precomputed ``modes`` to avoid
    repeating the eigendecomposition.
    """
    if modes is None:
        modes = eigendecompose(model)
    lam = modes.eigenvalues[mode_index]
    others = np.delete(modes.eigenvalues, mode_index)
    if others.size:
        gap = np.min(np.abs(others - lam))
        if gap <= 1e-9 * max(1.0, abs(lam)):
            raise SmallSignalError(
                f"residue undefined for non-simple mode {lam:.6g} (gap {gap:.3e})"
            )
    t_i = modes.right_vectors[:, mode_index]
    v_i = modes.left_vectors[mode_index, :]
    return complex((model.c[output_index, :] @ t_i) * (v_i @ model.b[:, input_index]))


def controller_transfer(params, s):
    """Controller transfer function at complex frequency s.

    G(s) = k_m * (s t_w / (1 + s t_w)) * ((1 + s t_1)/(1 + s t_2))
         * ((1 + s t_3)/(1 + s t_4)).
    """
    s = np.asarray(s, dtype=complex)
    washout = s * params.t_w / (1.0 + s * params.t_w)
    lead1 = (1.0 + s * params.t_1) / (1.0 + s * params.t_2)
    lead2 = (1.0 + s * params.t_3) / (1.0 + s * params.t_4)
    out = params.k_m * washout * lead1 * lead2
    return complex(out) if out.ndim == 0 else out


def _controller_poles(params):
    return np.array([-1.0 / params.t_w, -1.0 / params.t_2, -1.0 / params.t_4])


def realize_controller(params):
    """3-state realization of the washout + double lead-lag controller.

    Cascade order: gain and both lead-lag stages first, washout last, so
    the steady-state gain vanishes.  The feedthrough is
    k_m * (t_1/t_2) * (t_3/t_4).
    """
    sections = [
        # lead-lag (1 + s t_a)/(1 + s t_b): x' = (u - x)/t_b, y = (1 - ta/tb) x + (ta/tb) u
        (-1.0 / params.t_2, 1.0 / params.t_2, 1.0 - params.t_1 / params.t_2, params.t_1 / params.t_2),
        (-1.0 / params.t_4, 1.0 / params.t_4, 1.0 - params.t_3 / params.t_4, params.t_3 / params.t_4),
        # washout s t_w/(1 + s t_w): x' = (u - x)/t_w, y = u - x
        (-1.0 / params.t_w, 1.0 / params.t_w, -1.0, 1.0),
    ]
    a = np.zeros((3, 3))
    b = np.zeros((3, 1))
    c = np.zeros((1, 3))
    d = params.k_m
    for i, (ai, bi, ci, di) in enumerate(sections):
        # section input is the cascade output so far (c, d)
        a[i, :i] = bi * c[0, :i]
        a[i, i] = ai
        b[i, 0] = bi * d
        c[0, :i] *= di
        c[0, i] = ci
        d = di * d
    return StateSpaceModel(
        a=a,
        b=b,
        c=c,
        d=np.array([[d]]),
        state_names=("pss_leadlag1", "pss_leadlag2", "pss_washout"),
        input_names=("pss_in",),
        output_names=("pss_out",),
    )


def predict_shift(residue_value, params, lam):
    """First-order eigenvalue shift from attaching the controller.

    Under the negative-feedback interconnection of ``close_loop`` the
    mode moves by -r G(lam) to first order in the controller gain.
    """
    lam = complex(lam)
    poles = _controller_poles(params)
    dist = np.abs(lam - poles)
    if np.any(dist < 1e-9 * np.maximum(1.0, np.abs(poles))):
        raise SmallSignalError(f"eigenvalue {lam:.6g} coincides with a controller pole")
    return -complex(residue_value) * controller_transfer(params, lam)


def close_loop(plant, controller, input_channel=0, output_channel=0):
    """Negative-feedback interconnection of a SISO controller with a plant.

    The controller reads plant output ``output_channel`` and its output is
    subtracted at plant input ``input_channel``; all plant inputs and
    outputs remain external ports of the result.
    """
    if controller.n_inputs != 1 or controller.n_outputs != 1:
        raise SmallSignalError("controller must be SISO")
    if not 0 <= input_channel < plant.n_inputs:
        raise SmallSignalError(f"input channel {input_channel} out of range")
    if not 0 <= output_channel < plant.n_outputs:
        raise SmallSignalError(f"output channel {output_channel} out of range")

    ap, bp, cp, dp = plant.a, plant.b, plant.c, plant.d
    ac, bc, cc, dc = controller.a, controller.b, controller.c, float(controller.d[0, 0])
    j, k = input_channel, output_channel
    bj = bp[:, j : j + 1]
    dcol = dp[:, j : j + 1]
    ck = cp[k : k + 1, :]
    dk = dp[k : k + 1, :]

    alpha = 1.0 + dc * dp[k, j]
    if abs(alpha) < 1e-12:
        raise SmallSignalError(
            f"algebraic loop on input '{plant.input_names[j]}' / "
            f"output '{plant.output_names[k]}' is ill-posed"
        )
    g = dc / alpha

    a_cl = np.block(
        [
            [ap - bj * g @ ck, -(bj @ cc) / alpha],
            [(bc @ ck) / alpha, ac - (bc * dp[k, j] @ cc) / alpha],
        ]
    )
    b_cl = np.vstack([bp - bj * g @ dk, (bc @ dk) / alpha])
    c_cl = np.hstack([cp - dcol * g @ ck, -(dcol @ cc) / alpha])
    d_cl = dp - dcol * g @ dk
    return StateSpaceModel(
        a=a_cl,
        b=b_cl,
        c=c_cl,
        d=d_cl,
        state_names=plant.state_names + controller.state_names,
        input_names=plant.input_names,
        output_names=plant.output_names,
    )


@dataclass(frozen=True)
class StepResponse:
    """Unit-step response samples; ``diverging`` flags |y| beyond 1e6."""

    times: np.ndarray
    outputs: np.ndarray
    diverging: bool


def step_response(model, input_index=0, horizon_s=10.0, dt_s=0.01):
    """Unit-step response via exact zero-order-hold discretization."""
    if dt_s <= 0:
        raise SmallSignalError("dt_s must be > 0")
    if horizon_s < dt_s:
        raise SmallSignalError("horizon must be at least one step")
    n = model.n_states
    b_col = model.b[:, input_index : input_index + 1]
    d_col = model.d[:, input_index]
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = model.a
    aug[:n, n:] = b_col
    phi = la.expm(aug * dt_s)
    ad, bd = phi[:n, :n], phi[:n, n]

    n_steps = int(round(horizon_s / dt_s))
    times = np.arange(n_steps + 1) * dt_s
    outputs = np.empty((n_steps + 1, model.n_outputs))
    x = np.zeros(n)
    for i in range(n_steps + 1):
        outputs[i] = model.c @ x + d_col
        x = ad @ x + bd
    return StepResponse(
        times=times,
        outputs=outputs,
        diverging=bool(np.any(np.abs(outputs) > 1e6)),
    )


def load_model(path):
    """Read a StateSpaceModel from its JSON file format."""
    with open(path) as fh:
        data = json.load(fh)
    try:
        return StateSpaceModel(
            a=data["a"],
            b=data["b"],
            c=data["c"],
            d=data["d"],
            state_names=tuple(data.get("state_names", ())),
            input_names=tuple(data.get("input_names", ())),
            output_names=tuple(data.get("output_names", ())),
        )
    except KeyError as exc:
        raise SmallSignalError(f"model file {path} is missing key {exc}") from None


def save_model(model, path):
    data = {
        "a": model.a.tolist(),
        "b": model.b.tolist(),
        "c": model.c.tolist(),
        "d": model.d.tolist(),
        "state_names": list(model.state_names),
        "input_names": list(model.input_names),
        "output_names": list(model.output_names),
    }
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")
