"""
Geometry helpers: quaternions, covariances and the spherical-harmonic basis
"""
import numpy as np

SH_C1 = 0.4886025119029199
SH_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
         -1.0925484305920792, 0.5462742152960396)
SH_C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
         0.3731763325901154, -0.4570457994644658, 1.445305721320277,
         -0.5900435899266435)


def sh_rest_count(degree: int) -> int:
    """Number of SH coefficients above band 0 for a given degree"""
    return (degree + 1) ** 2 - 1


def sh_degree_from_count(count: int) -> int:
    degree = int(round(np.sqrt(count + 1))) - 1
    if sh_rest_count(degree) != count:
        raise ValueError(f"{count} is not a valid SH rest-coefficient count")
    return degree


def quat_to_rotmat(quats: np.ndarray) -> np.ndarray:
    """(N,4) quaternions (w,x,y,z) to (N,3,3) rotation matrices"""
    q = np.asarray(quats, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    rot = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    rot[..., 0, 0] = 1 - 2 * (y * y + z * z)
    rot[..., 0, 1] = 2 * (x * y - w * z)
    rot[..., 0, 2] = 2 * (x * z + w * y)
    rot[..., 1, 0] = 2 * (x * y + w * z)
    rot[..., 1, 1] = 1 - 2 * (x * x + z * z)
    rot[..., 1, 2] = 2 * (y * z - w * x)
    rot[..., 2, 0] = 2 * (x * z - w * y)
    rot[..., 2, 1] = 2 * (y * z + w * x)
    rot[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return rot


def rotmat_to_quat(rot: np.ndarray) -> np.ndarray:
    """Single 3x3 rotation matrix to a unit quaternion (w,x,y,z) with w >= 0"""
    m = np.asarray(rot, dtype=np.float64)
    trace = m[0, 0] + m[1, 1] + m[2, 2]
    if trace > 0:
        s = 2.0 * np.sqrt(trace + 1.0)
        q = np.array([0.25 * s, (m[2, 1] - m[1, 2]) / s,
                      (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s])
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = 2.0 * np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        q = np.array([(m[2, 1] - m[1, 2]) / s, 0.25 * s,
                      (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s])
    elif m[1, 1] > m[2, 2]:
        s = 2.0 * np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
        q = np.array([(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s,
                      0.25 * s, (m[1, 2] + m[2, 1]) / s])
    else:
        s = 2.0 * np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        q = np.array([(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s,
                      (m[1, 2] + m[2, 1]) / s, 0.25 * s])
    q /= np.linalg.norm(q)
    return q if q[0] >= 0 else -q


def quat_from_normal(normal: np.ndarray) -> np.ndarray:
    """Quaternion rotating the local z axis onto a unit normal"""
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    z = np.array([0.0, 0.0, 1.0])
    cos = float(np.dot(z, n))
    if cos > 1.0 - 1e-12:
        return np.array([1.0, 0.0, 0.0, 0.0])
    if cos < -1.0 + 1e-12:
        return np.array([0.0, 1.0, 0.0, 0.0])
    axis = np.cross(z, n)
    q = np.array([1.0 + cos, axis[0], axis[1], axis[2]])
    return q / np.linalg.norm(q)


def covariance(scales: np.ndarray, quats: np.ndarray) -> np.ndarray:
    """Sigma = R diag(s^2) R^T for (N,3) scales and (N,4) quaternions"""
    rot = quat_to_rotmat(quats)
    s2 = np.asarray(scales, dtype=np.float64) ** 2
    return np.einsum("nij,nj,nkj->nik", rot, s2, rot)


def inverse_covariance(scales: np.ndarray, quats: np.ndarray) -> np.ndarray:
    rot = quat_to_rotmat(quats)
    inv_s2 = 1.0 / np.asarray(scales, dtype=np.float64) ** 2
    return np.einsum("nij,nj,nkj->nik", rot, inv_s2, rot)


def normalize(v: np.ndarray, axis: int = -1, eps: float = 0.0) -> np.ndarray:
    norm = np.linalg.norm(v, axis=axis, keepdims=True)
    return v / np.maximum(norm, eps) if eps > 0 else v / norm


def sh_rest_basis(dirs: np.ndarray, degree: int) -> np.ndarray:
    """SH basis above band 0 evaluated at unit directions, shape (..., rest)"""
    d = np.asarray(dirs, dtype=np.float64)
    out = np.zeros(d.shape[:-1] + (sh_rest_count(degree),), dtype=np.float64)
    if degree == 0:
        return out
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    out[..., 0] = -SH_C1 * y
    out[..., 1] = SH_C1 * z
    out[..., 2] = -SH_C1 * x
    if degree > 1:
        xx, yy, zz = x * x, y * y, z * z
        out[..., 3] = SH_C2[0] * x * y
        out[..., 4] = SH_C2[1] * y * z
        out[..., 5] = SH_C2[2] * (2.0 * zz - xx - yy)
        out[..., 6] = SH_C2[3] * x * z
        out[..., 7] = SH_C2[4] * (xx - yy)
        if degree > 2:
            out[..., 8] = SH_C3[0] * y * (3.0 * xx - yy)
            out[..., 9] = SH_C3[1] * x * y * z
            out[..., 10] = SH_C3[2] * y * (4.0 * zz - xx - yy)
            out[..., 11] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
            out[..., 12] = SH_C3[4] * x * (4.0 * zz - xx - yy)
            out[..., 13] = SH_C3[5] * z * (xx - yy)
            out[..., 14] = SH_C3[6] * x * (xx - 3.0 * yy)
    return out


def eval_radiance(colors: np.ndarray, sh_rest: np.ndarray, dirs: np.ndarray):
    """
    View-dependent color c(w) = color + sum_k Y_k(w) sh_k, clamped at zero

    Returns:
        (radiance (N,3), basis (N,rest), active (N,3) where the clamp is inactive)
    """
    colors = np.asarray(colors, dtype=np.float64)
    rest = sh_rest.shape[1] if sh_rest is not None else 0
    if rest == 0:
        return colors.copy(), np.zeros((colors.shape[0], 0)), np.ones(colors.shape, dtype=bool)
    basis = sh_rest_basis(dirs, sh_degree_from_count(rest))
    raw = colors + np.einsum("nk,nkc->nc", basis, np.asarray(sh_rest, dtype=np.float64))
    active = raw > 0.0
    return np.where(active, raw, 0.0), basis, active
