"""Slow scalar reference integrator used only as a test oracle.

Deliberately shares no code with the package: pure Python floats, rotations
done by quaternion conjugation rather than rotation matrices. Implements the
same scheme (first-order actuator lag via explicit Euler, then semi-implicit
Euler on the rigid body, quaternion renormalized each substep).
"""

import math


def quat_mul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def quat_conj(q):
    return (q[0], -q[1], -q[2], -q[3])


def rotate(q, v):
    """Rotate vector v by unit quaternion q via q (0,v) q*."""
    out = quat_mul(quat_mul(q, (0.0, v[0], v[1], v[2])), quat_conj(q))
    return [out[1], out[2], out[3]]


def ref_step(state, cmd, dt_control, dt_physics, gravity, drag, thrust_lag, rate_lag,
             thrust_ceiling):
    """Integrate one control interval. state/cmd are plain dicts and tuples."""
    n = round(dt_control / dt_physics)
    assert abs(dt_control / dt_physics - n) < 1e-9
    p = list(state["position"])
    v = list(state["velocity"])
    q = list(state["quat"])
    thrust = state["thrust"]
    omega = list(state["body_rate"])
    cmd_thrust, cmd_rate = cmd
    for _ in range(n):
        thrust = thrust + (dt_physics / thrust_lag) * (cmd_thrust - thrust)
        thrust = min(max(thrust, 0.0), thrust_ceiling)
        for k in range(3):
            omega[k] = omega[k] + (dt_physics / rate_lag) * (cmd_rate[k] - omega[k])
        v_body = rotate(quat_conj(q), v)
        drag_world = rotate(q, [drag[0] * v_body[0], drag[1] * v_body[1], drag[2] * v_body[2]])
        thrust_world = rotate(q, [0.0, 0.0, thrust])
        for k in range(3):
            v[k] = v[k] + (gravity[k] + thrust_world[k] - drag_world[k]) * dt_physics
            p[k] = p[k] + v[k] * dt_physics
        half = quat_mul(q, (0.0, omega[0], omega[1], omega[2]))
        q = [q[k] + 0.5 * half[k] * dt_physics for k in range(4)]
        norm = math.sqrt(sum(c * c for c in q))
        q = [c / norm for c in q]
    return {"position": p, "velocity": v, "quat": q, "thrust": thrust, "body_rate": omega}
