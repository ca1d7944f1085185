"""Final stitching of the per-submesh maps into one parameterization.

Each submesh gets a harmonic extension of its welded boundary (Dirichlet
Laplace solve on the flattened domain) and, optionally, a quasi-conformal
correction that pulls the achieved Beltrami coefficient back toward the
prescribed one. Duplicated cut vertices are reconciled by averaging, and a
small metric suite (Beltrami error, logged area ratio, disk automorphism
search) quantifies the result.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import (
    DegenerateFace,
    MissingBoundaryValue,
    MuOutOfRange,
    SeamMismatch,
    SingularSystem,
)
from .flatten import (
    PlanarEmbedding,
    beltrami_per_face,
    compose_beltrami,
    cotan_laplacian,
    lsqc_flatten,
)
from .mesh import TriangleMesh, face_areas

LAPLACE_RTOL = 1e-8
SEAM_RTOL = 1e-6


# ---------------------------------------------------------------------------
# Dirichlet Laplace solve


def laplace_dirichlet(mesh, boundary_values):
    """Harmonic extension of prescribed boundary positions.

    mesh is the flattened submesh (2D vertices); boundary_values maps vertex
    id -> complex target position (or an (u, v) pair). Every boundary vertex
    of the mesh must be covered. Interior rows of the cotangent Laplacian
    are solved to a relative residual of 1e-8; boundary rows are reproduced
    exactly.
    """
    n = mesh.n_vertices
    fixed_ids = np.asarray(sorted(boundary_values), dtype=np.int64)
    missing = np.setdiff1d(mesh.boundary_vertices(), fixed_ids)
    if len(missing):
        raise MissingBoundaryValue(
            f"{len(missing)} boundary vertices without a value "
            f"(first: {int(missing[0])})"
        )
    vals = np.empty((len(fixed_ids), 2))
    for k, vid in enumerate(fixed_ids):
        v = boundary_values[int(vid)]
        if isinstance(v, complex):
            vals[k] = (v.real, v.imag)
        else:
            vals[k] = v

    uv = np.zeros((n, 2))
    uv[fixed_ids] = vals
    free = np.setdiff1d(np.arange(n), fixed_ids)
    if len(free) == 0:
        return PlanarEmbedding(uv=uv)

    L = cotan_laplacian(mesh).tocsr()
    Lff = L[free][:, free].tocsc()
    rhs = -(L[free][:, fixed_ids] @ vals)
    try:
        lu = spla.splu(Lff, permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        raise SingularSystem(f"Dirichlet system factorization failed: {exc}") from exc
    x = lu.solve(rhs)
    scale = max(np.linalg.norm(rhs), 1e-300)
    for _ in range(5):
        r = rhs - Lff @ x
        if np.linalg.norm(r) <= 0.01 * LAPLACE_RTOL * scale:
            break
        x = x + lu.solve(r)
    r = rhs - Lff @ x
    if not np.all(np.isfinite(x)) or np.linalg.norm(r) > LAPLACE_RTOL * scale:
        raise SingularSystem("Dirichlet interior residual did not converge")
    uv[free] = x
    return PlanarEmbedding(uv=uv)


def harmonic_residual(mesh, embedding, boundary_ids=None):
    """Relative residual of the interior Laplacian rows; diagnostic."""
    if boundary_ids is None:
        boundary_ids = mesh.boundary_vertices()
    free = np.setdiff1d(np.arange(mesh.n_vertices), boundary_ids)
    if len(free) == 0:
        return 0.0
    L = cotan_laplacian(mesh).tocsr()
    full = L[free] @ embedding.uv
    ref = np.linalg.norm(L[free][:, boundary_ids] @ embedding.uv[boundary_ids])
    return float(np.linalg.norm(full) / max(ref, 1e-300))


# ---------------------------------------------------------------------------
# Quasi-conformal correction (kept-best)


def qc_correction(source_vertices, faces, image, mu_target):
    """Compose the map with a quasi-conformal correction toward mu_target.

    source_vertices/faces describe the original submesh; image is its current
    planar embedding. The correction coefficient comes from the composition
    rule, the correction itself from a least-squares quasi-conformal solve on
    the image domain pinned at two far-apart vertices (so a null correction
    is the identity). Kept-best: the corrected map is returned only when the
    mean absolute Beltrami error strictly decreases.
    """
    source_vertices = np.asarray(source_vertices, dtype=float)
    mu_target = np.asarray(mu_target, dtype=np.complex128)
    fd = beltrami_per_face(source_vertices, faces, image.uv)
    e_before = float(np.abs(fd.mu_face - mu_target).mean())

    image_mesh = TriangleMesh(vertices=image.uv, faces=faces, boundary_loops=[])
    z = image.complex_view
    i0 = int(np.argmin(z.real + z.imag))
    i1 = int(np.argmax(np.abs(z - z[i0])))
    pins = [
        (i0, (float(z[i0].real), float(z[i0].imag))),
        (i1, (float(z[i1].real), float(z[i1].imag))),
    ]
    try:
        nu = compose_beltrami(source_vertices, faces, image.uv, mu_target)
        corrected = lsqc_flatten(image_mesh, nu, pins=pins)
    except MuOutOfRange:
        # flipped or near-degenerate faces make the composed coefficient
        # inadmissible; kept-best then means "no correction"
        return image
    fd2 = beltrami_per_face(source_vertices, faces, corrected.uv)
    e_after = float(np.abs(fd2.mu_face - mu_target).mean())
    if e_after < e_before:
        return corrected
    return image


# ---------------------------------------------------------------------------
# Global assembly


@dataclass
class GlobalParameterization:
    uv: np.ndarray  # (n_parent, 2)
    submesh_uv: list  # PlanarEmbedding per submesh
    vertex_label: np.ndarray  # one owning submesh label per parent vertex
    provenance: list = field(default_factory=list)  # stage tags, in order

    @property
    def complex_view(self):
        return self.uv[:, 0] + 1j * self.uv[:, 1]


def assemble_global(submeshes, embeddings, n_vertices=None, provenance=()):
    """Merge per-submesh embeddings into parent-vertex uv.

    Cut vertices appear in several submeshes; their copies must agree to
    1e-6 of the overall diameter (a larger gap signals an upstream welding
    bug) and are averaged.
    """
    if n_vertices is None:
        n_vertices = 1 + max(int(s.to_parent.max()) for s in submeshes)
    acc = np.zeros((n_vertices, 2))
    cnt = np.zeros(n_vertices)
    lo = np.full((n_vertices, 2), np.inf)
    hi = np.full((n_vertices, 2), -np.inf)
    label = np.full(n_vertices, -1, dtype=np.int64)
    for sub, emb in zip(submeshes, embeddings):
        ids = sub.to_parent
        acc[ids] += emb.uv
        cnt[ids] += 1
        np.minimum.at(lo, ids, emb.uv)
        np.maximum.at(hi, ids, emb.uv)
        label[ids] = sub.label
    if np.any(cnt == 0):
        raise SeamMismatch(
            f"parent vertex {int(np.flatnonzero(cnt == 0)[0])} owned by no submesh"
        )
    all_uv = np.concatenate([e.uv for e in embeddings])
    diam = float(np.ptp(all_uv, axis=0).max())
    gap = (hi - lo).max(axis=1)
    worst = float(gap.max())
    if worst > SEAM_RTOL * max(diam, 1e-300):
        raise SeamMismatch(
            f"cut vertex disagreement {worst:.3e} exceeds "
            f"{SEAM_RTOL:.0e} x diameter {diam:.3e}",
            hint="boundary welding drifted; inspect the weld chain",
        )
    uv = acc / cnt[:, None]
    return GlobalParameterization(
        uv=uv,
        submesh_uv=list(embeddings),
        vertex_label=label,
        provenance=list(provenance),
    )


# ---------------------------------------------------------------------------
# Metrics


@dataclass
class ParamReport:
    e_submesh: list
    e_global: float
    flipped_faces: int
    area_mean_abs: float
    area_hist_counts: list
    area_hist_edges: list
    hole_circularity: list
    timings: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "e_submesh": [float(v) for v in self.e_submesh],
            "e_global": float(self.e_global),
            "flipped_faces": int(self.flipped_faces),
            "area_mean_abs": float(self.area_mean_abs),
            "area_hist_counts": [int(c) for c in self.area_hist_counts],
            "area_hist_edges": [float(x) for x in self.area_hist_edges],
            "hole_circularity": [float(c) for c in self.hole_circularity],
            "timings": {k: float(v) for k, v in self.timings.items()},
        }


def beltrami_error(vertices, faces, uv, mu_target):
    """Per-face error e_T = (mu of the map) - (prescribed mu), and the mean
    absolute error e. This is an absolute error, not a relative one."""
    fd = beltrami_per_face(np.asarray(vertices, dtype=float), faces, uv)
    e_face = fd.mu_face - np.asarray(mu_target, dtype=np.complex128)
    return e_face, float(np.abs(e_face).mean())


def area_distortion(vertices, faces, uv, bins=20):
    """Logged area ratio per face.

    d(T) = log of (image area share of T) / (source area share of T), where
    shares are normalized by the respective total areas, so uniform scaling
    of either side cancels. Returns (d per face, summary dict).
    """
    src = face_areas(np.asarray(vertices, dtype=float), faces)
    uv = np.asarray(uv)
    if uv.ndim == 1:
        uv = np.column_stack([uv.real, uv.imag])
    img = face_areas(uv, faces)
    if np.any(src <= 0) or np.any(img <= 0):
        raise DegenerateFace("zero-area face in area distortion")
    d = np.log((img / img.sum()) / (src / src.sum()))
    counts, edges = np.histogram(d, bins=bins)
    summary = {
        "mean_abs": float(np.abs(d).mean()),
        "hist_counts": counts.tolist(),
        "hist_edges": edges.tolist(),
    }
    return d, summary


def disk_automorphism(z, alpha):
    """f(z) = (z - alpha)/(1 - conj(alpha) z)."""
    return (z - alpha) / (1.0 - np.conj(alpha) * z)


ALPHA_RMAX = 1.0 - 1e-3


def mobius_area_correct(vertices, faces, uv, grid=17, levels=3):
    """Search for the disk automorphism minimizing the summed squared logged
    area ratio, and apply it.

    Coarse polar grid over |alpha| <= 1 - 1e-3 followed by local grid
    refinement; deterministic and derivative-free. Falls back to alpha = 0
    (no change) when nothing beats it. Returns (corrected uv, alpha).
    """
    vertices = np.asarray(vertices, dtype=float)
    uv = np.asarray(uv)
    z = uv[:, 0] + 1j * uv[:, 1]
    src = face_areas(vertices, faces)
    if np.any(src <= 0):
        raise DegenerateFace("zero-area face in area correction")
    src_share = src / src.sum()

    def objective(alpha):
        w = disk_automorphism(z, alpha)
        wuv = np.column_stack([w.real, w.imag])
        img = face_areas(wuv, faces)
        total = img.sum()
        if np.any(img <= 0) or not np.isfinite(total) or total <= 0:
            return np.inf
        d = np.log((img / total) / src_share)
        return float((d * d).sum())

    best_alpha = 0.0 + 0.0j
    best_obj = objective(best_alpha)
    r_c, t_c = ALPHA_RMAX / 2.0, 0.0
    r_half, t_half = ALPHA_RMAX / 2.0, np.pi
    for level in range(levels + 1):
        rs = np.clip(np.linspace(r_c - r_half, r_c + r_half, grid), 0.0, ALPHA_RMAX)
        ts = np.linspace(t_c - t_half, t_c + t_half, grid)
        for r in rs:
            for t in ts:
                a = r * np.exp(1j * t)
                val = objective(a)
                if val < best_obj:
                    best_obj, best_alpha = val, a
        r_c, t_c = abs(best_alpha), float(np.angle(best_alpha))
        r_half /= grid / 2.0
        t_half /= grid / 2.0
    if abs(best_alpha) == 0.0:
        return uv.copy(), 0.0 + 0.0j
    w = disk_automorphism(z, best_alpha)
    return np.column_stack([w.real, w.imag]), complex(best_alpha)


def fit_circle(points):
    """Algebraic least-squares circle through complex samples.

    Returns (center, radius, max residual of |z - c| - r). Insensitive to
    uneven spacing along the circle, unlike the centroid-based circularity.
    """
    z = np.asarray(points, dtype=np.complex128)
    A = np.column_stack([2 * z.real, 2 * z.imag, np.ones(len(z))])
    b = np.abs(z) ** 2
    (cx, cy, c0), *_ = np.linalg.lstsq(A, b, rcond=None)
    center = complex(cx, cy)
    radius = float(np.sqrt(max(c0 + cx * cx + cy * cy, 0.0)))
    resid = float(np.abs(np.abs(z - center) - radius).max())
    return center, radius, resid
