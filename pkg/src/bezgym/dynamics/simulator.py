"""Planar articulated-body simulator for the Bez analog and a kickable ball.

Generalized coordinates are ``[x, z, pitch, q_0 .. q_{N-1}]`` where (x, z) is
the pelvis (hip) point and pitch is the torso angle.  Equations of motion are
assembled in Kane form from per-link COM Jacobians,

    M(s) a = sum_i m_i J_i^T (g - b_i) + S^T tau + sum_c J_c^T F_c,

with b_i the velocity-product (centripetal) acceleration of link i's COM.

Integration is kick-drift-kick (velocity Verlet): exact for constant
acceleration and symplectic for conservative forces.  Each half-kick treats
the stiff forces (unsaturated PD servos, penalty contacts, sticking friction)
linearly implicitly, which keeps it stable at the 120 Hz control rate.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from bezgym.dynamics.model import RobotModel
from bezgym.errors import NumericalDivergence

CONTROL_DT = 1.0 / 120.0


@dataclass(frozen=True)
class ContactParams:
    kn: float = 1e4            # N/m
    dn: float = 100.0          # N s/m
    mu: float = 0.8
    restitution: float = 0.6   # ball against the robot's legs
    slip_velocity: float = 1e-3  # m/s, width of the regularized Coulomb ramp
    gravity: float = 9.81
    ball_radius: float = 0.07
    ball_mass: float = 0.15
    rolling_resistance: float = 0.05

    def __post_init__(self):
        if self.kn <= 0 or self.dn < 0 or self.mu < 0:
            raise ValueError("contact params need kn > 0, dn >= 0, mu >= 0")
        if not 0 <= self.restitution <= 1:
            raise ValueError("restitution must lie in [0, 1]")


@dataclass
class BatchPhysics:
    """Per-row physical parameters for a batch of worlds (domain randomization)."""

    gravity: np.ndarray     # (B,)
    mu: np.ndarray          # (B,)
    mass_scale: np.ndarray  # (B, n_links); inertia scales with mass
    gain_scale: np.ndarray  # (B, n_joints); kp and kd scale together

    @classmethod
    def nominal(cls, model: RobotModel, params: ContactParams, batch: int) -> "BatchPhysics":
        return cls(
            gravity=np.full(batch, params.gravity),
            mu=np.full(batch, params.mu),
            mass_scale=np.ones((batch, model.n_links)),
            gain_scale=np.ones((batch, model.n_joints)),
        )


@dataclass
class WorldState:
    """Robot and ball state.  Arrays carry an optional leading batch axis."""

    base_pose: np.ndarray    # x, z, pitch
    base_vel: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    ball_pos: np.ndarray     # x, z of the ball centre
    ball_vel: np.ndarray
    time: np.ndarray
    steps: np.ndarray
    torque: np.ndarray       # torque applied during the last step

    @property
    def batched(self) -> bool:
        return self.q.ndim == 2

    @property
    def batch_size(self) -> int:
        return self.q.shape[0] if self.batched else 1

    def as_batch(self) -> "WorldState":
        if self.batched:
            return self
        return WorldState(**{f.name: np.asarray(getattr(self, f.name))[None] for f in fields(self)})

    def unbatch(self) -> "WorldState":
        return WorldState(**{f.name: getattr(self, f.name)[0] for f in fields(self)})

    def index(self, idx) -> "WorldState":
        return WorldState(**{f.name: getattr(self, f.name)[idx] for f in fields(self)})

    def copy(self) -> "WorldState":
        return WorldState(**{f.name: np.array(getattr(self, f.name), copy=True) for f in fields(self)})

    def set_rows(self, mask, other: "WorldState") -> "WorldState":
        """Copy with the rows selected by ``mask`` taken from ``other``."""
        out = {}
        for f in fields(self):
            mine, theirs = getattr(self, f.name), getattr(other, f.name)
            m = mask.reshape((-1,) + (1,) * (mine.ndim - 1))
            out[f.name] = np.where(m, theirs, mine)
        return WorldState(**out)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(getattr(self, f.name))) for f in fields(self))

    @staticmethod
    def stack(states) -> "WorldState":
        return WorldState(**{f.name: np.stack([getattr(s, f.name) for s in states]) for f in fields(WorldState)})


def make_world(model: RobotModel, q=None, base_pose=None, ball_pos=(10.0, 0.07),
               batch: int | None = None) -> WorldState:
    n = model.n_joints
    q = model.ready_pose.copy() if q is None else np.asarray(q, dtype=float)
    if base_pose is None:
        base_pose = np.array([0.0, standing_pelvis_height(model, q), 0.0])
    w = WorldState(
        base_pose=np.asarray(base_pose, dtype=float),
        base_vel=np.zeros(3),
        q=q,
        qd=np.zeros(n),
        ball_pos=np.asarray(ball_pos, dtype=float),
        ball_vel=np.zeros(2),
        time=np.array(0.0),
        steps=np.array(0, dtype=np.int64),
        torque=np.zeros(n),
    )
    if batch is not None:
        w = WorldState(**{f.name: np.repeat(np.asarray(getattr(w, f.name))[None], batch, axis=0)
                          for f in fields(w)})
    return w


# ---------------------------------------------------------------------------
# motors and contacts


def torque_limit(stall_torque, no_load_speed, qd, demand):
    """Linear torque-speed envelope: full stall torque unless the joint already
    moves in the direction of the demanded torque."""
    co_directed = qd * demand > 0
    derated = stall_torque * np.maximum(0.0, 1.0 - np.abs(qd) / no_load_speed)
    return np.where(co_directed, derated, stall_torque)


def pd_torque(motor, q, qd, target):
    """Servo torque for one joint (or arrays of joints sharing ``motor``)."""
    raw = motor.kp * (np.asarray(target) - q) - motor.kd * np.asarray(qd)
    limit = torque_limit(motor.stall_torque, motor.no_load_speed, qd, raw)
    out = np.clip(raw, -limit, limit)
    return float(out) if np.ndim(out) == 0 else out


def contact_force(penetration, normal_vel, tangential_vel, params: ContactParams):
    """Penalty normal force plus regularized Coulomb friction.

    ``normal_vel`` is the outward (separating) velocity.  Returns the
    ``(tangential, normal)`` force components.
    """
    penetration = np.asarray(penetration, dtype=float)
    fn = np.where(penetration > 0,
                  np.maximum(0.0, params.kn * penetration - params.dn * np.asarray(normal_vel)), 0.0)
    cap = params.mu * fn
    viscous = cap * np.asarray(tangential_vel) / params.slip_velocity
    ft = -np.clip(viscous, -cap, cap)
    return np.stack([ft, fn], axis=-1)


# ---------------------------------------------------------------------------
# kinematics


class _Tables:
    """Model constants rearranged for vectorized evaluation."""

    def __init__(self, model: RobotModel):
        n_links = model.n_links
        self.n = model.n_joints
        self.ndof = 3 + self.n
        self.parent = np.array([-1] + [j.parent for j in model.joints])
        self.anchor = np.array([0.0] + [j.anchor for j in model.joints])
        self.axis = np.array([float(l.axis) for l in model.links])
        self.mass = np.array([l.mass for l in model.links])
        self.inertia = np.array([l.inertia for l in model.links])
        self.com = np.array([l.com_offset for l in model.links])
        self.sqrt_mass = np.sqrt(self.mass)
        # pivot k = 0 is the base pitch, pivot k = 1 + j is joint j
        anc = np.zeros((n_links, 1 + self.n))
        anc[:, 0] = 1.0
        for i in range(1, n_links):
            k = i
            while k > 0:
                anc[i, k] = 1.0  # joint k-1 drives link k
                k = self.parent[k]
        self.anc = anc
        jw = np.zeros((n_links, self.ndof))
        jw[:, 2:] = anc
        self.jw = jw
        self.jw_outer = np.einsum("li,lj->lij", jw, jw)
        self.rot_mass = np.einsum("l,lij->ij", self.inertia, self.jw_outer)
        self.contact_link, self.contact_local = model.contact_table()
        self.seg_link = np.array([s[0] for s in model.strike_segments], dtype=int)
        self.seg_a = np.array([s[1] for s in model.strike_segments], dtype=float).reshape(-1, 2)
        self.seg_b = np.array([s[2] for s in model.strike_segments], dtype=float).reshape(-1, 2)
        m = model.motor_arrays()
        self.kp, self.kd = m["kp"], m["kd"]
        self.stall, self.noload = m["stall_torque"], m["no_load_speed"]
        self.lo, self.hi = model.limits
        self.torso = model.torso_link_id
        self.head = model.head_link_id
        self.imu_local = np.array(model.imu_point, dtype=float)


def tables(model: RobotModel) -> _Tables:
    t = model._cache.get("tables")
    if t is None:
        t = model._cache["tables"] = _Tables(model)
    return t


def link_angles(model, base_pose, q):
    t = tables(model)
    base_pose, q = np.asarray(base_pose), np.asarray(q)
    phi = np.empty(q.shape[:-1] + (t.n + 1,))
    phi[..., 0] = base_pose[..., 2]
    for i in range(1, t.n + 1):
        phi[..., i] = phi[..., t.parent[i]] + q[..., i - 1]
    return phi


def _frames(t: _Tables, base_pose, q):
    """Absolute link angles, proximal points, axis and forward unit vectors."""
    phi = np.empty(q.shape[:-1] + (t.n + 1,))
    prox = np.empty(q.shape[:-1] + (t.n + 1, 2))
    phi[..., 0] = base_pose[..., 2]
    prox[..., 0, :] = base_pose[..., :2]
    for i in range(1, t.n + 1):
        p = t.parent[i]
        phi[..., i] = phi[..., p] + q[..., i - 1]
    s, c = np.sin(phi), np.cos(phi)
    axis = np.stack([s, -c], axis=-1) * t.axis[:, None]
    fwd = np.stack([c, s], axis=-1)
    for i in range(1, t.n + 1):
        p = t.parent[i]
        prox[..., i, :] = prox[..., p, :] + t.anchor[i] * axis[..., p, :]
    return phi, prox, axis, fwd


def _local_to_world(prox, axis, fwd, link, local):
    return prox[..., link, :] + local[..., 0:1] * fwd[..., link, :] + local[..., 1:2] * axis[..., link, :]


def _point_jacobian(t: _Tables, prox, link, points):
    """Linear Jacobians (B, P, 2, ndof) of world points rigidly attached to ``link``."""
    B, P = points.shape[0], points.shape[1]
    J = np.zeros((B, P, 2, t.ndof))
    J[:, :, 0, 0] = 1.0
    J[:, :, 1, 1] = 1.0
    rel = points[:, :, None, :] - prox[:, None, :, :]  # (B, P, pivots, 2)
    mask = t.anc[link]  # (P, pivots)
    J[:, :, 0, 2:] = -rel[..., 1] * mask
    J[:, :, 1, 2:] = rel[..., 0] * mask
    return J


def point_positions(model, world: WorldState, link, local):
    """World positions of local points; ``link`` and ``local`` broadcast together."""
    t = tables(model)
    w = world.as_batch()
    _, prox, axis, fwd = _frames(t, w.base_pose, w.q)
    out = _local_to_world(prox, axis, fwd, np.asarray(link), np.asarray(local, dtype=float))
    return out if world.batched else out[0]


def contact_point_positions(model, world: WorldState):
    t = tables(model)
    return point_positions(model, world, t.contact_link, t.contact_local)


def link_com_positions(model, world: WorldState):
    t = tables(model)
    w = world.as_batch()
    _, prox, axis, fwd = _frames(t, w.base_pose, w.q)
    com = prox + t.com[:, None] * axis
    return com if world.batched else com[0]


def com_position(model, world: WorldState):
    t = tables(model)
    com = link_com_positions(model, world)
    return np.einsum("...lk,l->...k", com, t.mass) / t.mass.sum()


def com_velocity(model, world: WorldState):
    t = tables(model)
    w = world.as_batch()
    _, prox, axis, fwd = _frames(t, w.base_pose, w.q)
    com = prox + t.com[:, None] * axis
    J = _point_jacobian(t, prox, np.arange(t.n + 1), com)
    v = np.einsum("blaj,bj->bla", J, _gen_vel(w))
    vc = np.einsum("bla,l->ba", v, t.mass) / t.mass.sum()
    return vc if world.batched else vc[0]


def torso_com_height(model, world: WorldState):
    return link_com_positions(model, world)[..., model.torso_link_id, 1]


def imu_kinematics(model, world: WorldState):
    """World-frame linear velocity of the IMU point and torso pitch rate."""
    t = tables(model)
    w = world.as_batch()
    _, prox, axis, fwd = _frames(t, w.base_pose, w.q)
    pts = _local_to_world(prox, axis, fwd, np.array([t.torso]), t.imu_local[None])
    J = _point_jacobian(t, prox, np.array([t.torso]), pts)
    v = np.einsum("bpaj,bj->bpa", J, _gen_vel(w))[:, 0]
    omega = w.base_vel[:, 2]
    if world.batched:
        return v, omega
    return v[0], omega[0]


def standing_pelvis_height(model, q) -> float:
    """Pelvis height that puts the lowest foot contact point on the ground."""
    t = tables(model)
    q = np.asarray(q, dtype=float)[None]
    base = np.zeros((1, 3))
    _, prox, axis, fwd = _frames(t, base, q)
    pts = _local_to_world(prox, axis, fwd, t.contact_link, t.contact_local[None])
    return float(-pts[0, :, 1].min())


def _mass_matrix(t: _Tables, Jc, sqrt_mass=None, rot_mass=None):
    B = Jc.shape[0]
    sqrt_mass = t.sqrt_mass if sqrt_mass is None else sqrt_mass
    rot_mass = t.rot_mass if rot_mass is None else rot_mass
    Jm = (Jc * sqrt_mass[..., :, None, None]).reshape(B, -1, t.ndof)
    return np.matmul(Jm.transpose(0, 2, 1), Jm) + rot_mass


def _weighted_gram(w, J):
    """sum_p w[b, p] J[b, p]^T J[b, p] for J of shape (B, P, ndof)."""
    return np.matmul(J.transpose(0, 2, 1) * w[:, None, :], J)


def _gen_vel(w: WorldState):
    return np.concatenate([w.base_vel, w.qd], axis=-1)


# ---------------------------------------------------------------------------
# dynamics


def _robot_kick(t: _Tables, pos, vel, targets, params: ContactParams, s, fixed_base=False, passive=False,
                phys: "BatchPhysics | None" = None):
    """Implicit half-kick: returns (delta velocity, applied torque)."""
    B = pos.shape[0]
    if phys is None:
        mass, sqrt_mass, rot_mass = t.mass, t.sqrt_mass, t.rot_mass
        kp, kd, gravity, mu = t.kp, t.kd, params.gravity, params.mu
    else:
        mass = t.mass * phys.mass_scale
        sqrt_mass = np.sqrt(mass)
        rot_mass = np.tensordot(t.inertia * phys.mass_scale, t.jw_outer, axes=1)
        kp, kd = t.kp * phys.gain_scale, t.kd * phys.gain_scale
        gravity, mu = phys.gravity[:, None], phys.mu[:, None]
    base, q = pos[:, :3], pos[:, 3:]
    phi, prox, axis, fwd = _frames(t, base, q)
    com = prox + t.com[:, None] * axis
    links = np.arange(t.n + 1)
    Jc = _point_jacobian(t, prox, links, com)  # (B, L, 2, ndof)
    M = _mass_matrix(t, Jc, sqrt_mass, rot_mass)

    # velocity-product accelerations of each link's proximal point and COM
    omega = vel[:, 2:3] + np.zeros((B, t.n + 1))
    for i in range(1, t.n + 1):
        omega[:, i] = omega[:, t.parent[i]] + vel[:, 2 + i]
    acc_prox = np.zeros((B, t.n + 1, 2))
    for i in range(1, t.n + 1):
        p = t.parent[i]
        acc_prox[:, i] = acc_prox[:, p] - omega[:, p, None] ** 2 * (prox[:, i] - prox[:, p])
    bias = acc_prox - omega[..., None] ** 2 * (com - prox)
    gvec = np.stack(np.broadcast_arrays(0.0, -np.asarray(gravity)), axis=-1)  # (2,) or (B, 1, 2)
    Q = np.matmul(((gvec - bias) * mass[..., None]).reshape(B, 1, -1), Jc.reshape(B, -1, t.ndof))[:, 0]

    A = M.copy()
    K_v = np.zeros((B, t.ndof))  # accumulated K @ v for the implicit right-hand side

    # ground contacts
    pts = _local_to_world(prox, axis, fwd, t.contact_link, t.contact_local[None])
    Jp = _point_jacobian(t, prox, t.contact_link, pts)
    pv = np.matmul(Jp, vel[:, None, :, None])[..., 0]
    pen = -pts[..., 1]
    fn_raw = params.kn * pen - params.dn * pv[..., 1]
    active = (pen > 0) & (fn_raw > 0)
    fn = np.where(active, fn_raw, 0.0)
    cap = mu * fn
    visc = cap / params.slip_velocity
    sliding = np.abs(pv[..., 0]) * visc > cap
    ft = np.where(sliding, -np.sign(pv[..., 0]) * cap, -visc * pv[..., 0])
    F = np.stack([ft, fn], axis=-1)
    Q += np.matmul(F.reshape(B, 1, -1), Jp.reshape(B, -1, t.ndof))[:, 0]
    kz = np.where(active, params.kn, 0.0)
    dz = np.where(active, params.dn, 0.0)
    dx = np.where(active & ~sliding, visc, 0.0)
    Jz, Jx = Jp[:, :, 1, :], Jp[:, :, 0, :]
    A += _weighted_gram(s * dz + s * s * kz, Jz)
    A += _weighted_gram(s * dx, Jx)
    K_v += np.matmul((kz * pv[..., 1])[:, None, :], Jz)[:, 0]

    # servos: a joint is either in its linear PD regime (implicit spring-damper)
    # or saturated on the torque-speed envelope.  A saturated joint moving with
    # its torque is derated linearly in speed, which enters as implicit
    # back-EMF damping.  Regimes are iterated until they agree with the
    # post-kick velocity.
    qd = vel[:, 3:]
    raw = kp * (targets - q) - kd * qd
    limit = torque_limit(t.stall, t.noload, qd, raw)
    saturated = np.abs(raw) > limit
    sat_sign = np.sign(raw)
    co = saturated & (sat_sign * qd > 0)
    emf = t.stall / t.noload
    if passive:
        saturated = np.ones_like(saturated)
        sat_sign = np.zeros_like(sat_sign)
        co = np.zeros_like(saturated)
    if fixed_base:
        A[:, :3, :] = 0.0
        A[:, :, :3] = 0.0
        A[:, [0, 1, 2], [0, 1, 2]] = 1.0
        Q[:, :3] = 0.0
        K_v[:, :3] = 0.0
    diag = np.arange(3, t.ndof)
    for _ in range(2 * t.n + 2):
        damp = np.where(co, emf, 0.0)
        sat_tau = sat_sign * t.stall - damp * qd
        Ai = A.copy()
        Ai[:, diag, diag] += np.where(saturated, s * damp, s * kd + s * s * kp)
        rhs = Q.copy()
        rhs[:, 3:] += np.where(saturated, sat_tau, raw - s * kp * qd)
        rhs -= s * K_v
        if fixed_base:
            rhs[:, :3] = 0.0
        dv = np.linalg.solve(Ai, s * rhs[..., None])[..., 0]
        ddq = dv[:, 3:]
        qd_new = qd + ddq
        applied = np.where(saturated, sat_tau - damp * ddq,
                           raw - (kd + s * kp) * ddq - s * kp * qd)
        if passive:
            return dv, applied
        new_limit = torque_limit(t.stall, t.noload, qd_new, applied)
        over = ~saturated & (np.abs(applied) > new_limit * (1 + 1e-12))
        moving_with = sat_sign * qd_new > 0
        flip = saturated & (co != moving_with)
        if not (over.any() or flip.any()):
            return dv, applied
        sat_sign = np.where(over, np.sign(applied), sat_sign)
        saturated = saturated | over
        co = saturated & (sat_sign * qd_new > 0)
    return dv, applied


def _ball_kick(pos, vel, params: ContactParams, s, gravity):
    m = params.ball_mass
    pen = params.ball_radius - pos[:, 1]
    fn_raw = params.kn * pen - params.dn * vel[:, 1]
    active = (pen > 0) & (fn_raw > 0)
    fn = np.where(active, fn_raw, 0.0)
    cap = params.rolling_resistance * fn
    visc = cap / params.slip_velocity
    sliding = np.abs(vel[:, 0]) * visc > cap
    fx = np.where(sliding, -np.sign(vel[:, 0]) * cap, -visc * vel[:, 0])
    dx = np.where(active & ~sliding, visc, 0.0)
    kz = np.where(active, params.kn, 0.0)
    dz = np.where(active, params.dn, 0.0)
    dvx = s * fx / (m + s * dx)
    dvz = s * (fn - m * gravity - s * kz * vel[:, 1]) / (m + s * dz + s * s * kz)
    return np.stack([dvx, dvz], axis=-1)


def _ball_strikes(t: _Tables, pos, vel, ball_pos, ball_vel, params: ContactParams):
    """Resolve ball overlap with the leg segments (robot treated as kinematic)."""
    if t.seg_link.size == 0:
        return ball_pos, ball_vel
    base, q = pos[:, :3], pos[:, 3:]
    _, prox, axis, fwd = _frames(t, base, q)
    a = _local_to_world(prox, axis, fwd, t.seg_link, t.seg_a[None])
    b = _local_to_world(prox, axis, fwd, t.seg_link, t.seg_b[None])
    Ja = _point_jacobian(t, prox, t.seg_link, a)
    Jb = _point_jacobian(t, prox, t.seg_link, b)
    va = np.einsum("bpaj,bj->bpa", Ja, vel)
    vb = np.einsum("bpaj,bj->bpa", Jb, vel)
    r = params.ball_radius
    for k in range(t.seg_link.size):
        ab = b[:, k] - a[:, k]
        u = np.clip(np.einsum("ba,ba->b", ball_pos - a[:, k], ab)
                    / np.maximum(np.einsum("ba,ba->b", ab, ab), 1e-12), 0.0, 1.0)
        closest = a[:, k] + u[:, None] * ab
        vc = va[:, k] + u[:, None] * (vb[:, k] - va[:, k])
        d = ball_pos - closest
        dist = np.linalg.norm(d, axis=-1)
        hit = (dist < r) & (dist > 1e-12)
        if not hit.any():
            continue
        n = d / np.where(dist > 1e-12, dist, 1.0)[:, None]
        ball_pos = np.where(hit[:, None], closest + r * n, ball_pos)
        vn = np.einsum("ba,ba->b", ball_vel - vc, n)
        bounce = hit & (vn < 0)
        ball_vel = np.where(bounce[:, None], ball_vel - (1 + params.restitution) * vn[:, None] * n, ball_vel)
    return ball_pos, ball_vel


def step(world: WorldState, model: RobotModel, targets, params: ContactParams = ContactParams(),
         dt: float = CONTROL_DT, substeps: int = 1, simulate_robot: bool = True,
         fixed_base: bool = False, passive: bool = False,
         phys: "BatchPhysics | None" = None) -> WorldState:
    """Advance the world by ``dt`` with ``targets`` as PD position set-points.

    ``fixed_base`` pins the pelvis in place (test rigs); ``passive`` switches the
    servos off.  ``phys`` carries per-row (domain-randomized) physical
    parameters for batched worlds.  Returns a new :class:`WorldState`; the input is not modified.
    """
    t = tables(model)
    w = world.as_batch()
    targets = np.broadcast_to(np.asarray(targets, dtype=float), w.q.shape)
    pos = np.concatenate([w.base_pose, w.q], axis=-1)
    vel = np.concatenate([w.base_vel, w.qd], axis=-1)
    bpos, bvel = w.ball_pos.copy(), w.ball_vel.copy()
    h = dt / substeps
    s = 0.5 * h
    torque = np.zeros_like(w.q)
    g_ball = params.gravity if phys is None else phys.gravity
    for _ in range(substeps):
        if simulate_robot:
            dv, tau1 = _robot_kick(t, pos, vel, targets, params, s, fixed_base, passive, phys)
            vel = vel + dv
            pos = pos + h * vel
            dv, tau2 = _robot_kick(t, pos, vel, targets, params, s, fixed_base, passive, phys)
            vel = vel + dv
            torque += 0.5 * (tau1 + tau2) / substeps
            # software joint limits
            q = pos[:, 3:]
            over_hi, under_lo = q > t.hi, q < t.lo
            pos[:, 3:] = np.clip(q, t.lo, t.hi)
            qd = vel[:, 3:]
            vel[:, 3:] = np.where((over_hi & (qd > 0)) | (under_lo & (qd < 0)), 0.0, qd)
        bvel = bvel + _ball_kick(bpos, bvel, params, s, g_ball)
        bpos = bpos + h * bvel
        bvel = bvel + _ball_kick(bpos, bvel, params, s, g_ball)
        if simulate_robot:
            bpos, bvel = _ball_strikes(t, pos, vel, bpos, bvel, params)

    steps = w.steps + 1
    out = WorldState(
        base_pose=pos[:, :3], base_vel=vel[:, :3], q=pos[:, 3:], qd=vel[:, 3:],
        ball_pos=bpos, ball_vel=bvel, time=steps * dt, steps=steps, torque=torque,
    )
    if not out.is_finite():
        raise NumericalDivergence("simulation state became non-finite; check contact/PD parameters")
    return out if world.batched else out.unbatch()


def total_energy(model, world: WorldState, params: ContactParams = ContactParams()):
    """Kinetic plus gravitational potential energy of the robot (no springs)."""
    t = tables(model)
    w = world.as_batch()
    pos = np.concatenate([w.base_pose, w.q], axis=-1)
    vel = _gen_vel(w)
    _, prox, axis, fwd = _frames(t, pos[:, :3], pos[:, 3:])
    com = prox + t.com[:, None] * axis
    Jc = _point_jacobian(t, prox, np.arange(t.n + 1), com)
    M = _mass_matrix(t, Jc)
    ke = 0.5 * np.einsum("bi,bij,bj->b", vel, M, vel)
    pe = params.gravity * np.einsum("l,bl->b", t.mass, com[..., 1])
    e = ke + pe
    return e if world.batched else float(e[0])


def mass_matrix(model, world: WorldState):
    t = tables(model)
    w = world.as_batch()
    _, prox, axis, fwd = _frames(t, w.base_pose, w.q)
    com = prox + t.com[:, None] * axis
    Jc = _point_jacobian(t, prox, np.arange(t.n + 1), com)
    M = _mass_matrix(t, Jc)
    return M if world.batched else M[0]


def with_contact(params: ContactParams, **changes) -> ContactParams:
    return replace(params, **changes)
