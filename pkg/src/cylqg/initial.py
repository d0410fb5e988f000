"""Initial-data recipes for (F, G_bottom, G_top, j) and particle seeding."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from scipy.special import jn_zeros, jv

from .elliptic import EllipticData
from .geometry import CylGrid, ScalarField3D, SurfaceField
from .transport import ParticleSet

F_KINDS = ("bump", "ring")
G_KINDS = ("bump", "eigenfunction")
J_KINDS = ("compatible", "constant", "array", "csv")


def smooth_bump(rho2):
    """``exp(1 - 1/(1 - rho^2))`` inside the unit ball, 0 outside (value 1 at the center)."""
    rho2 = np.asarray(rho2, dtype=float)
    inside = rho2 < 1.0
    out = np.zeros_like(rho2)
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - rho2[inside]))
    return out


def volume_recipe(grid: CylGrid, recipe: dict):
    X, Y, Z = grid.xyz()
    a = float(recipe.get("amplitude", 1.0))
    if recipe["kind"] == "bump":
        cx, cy, cz = recipe.get("center", [0.0, 0.0, grid.h / 2])
        rh = float(recipe.get("radius", 0.3))
        rz = float(recipe.get("height", rh))
        rho2 = ((X - cx) ** 2 + (Y - cy) ** 2) / rh ** 2 + (Z - cz) ** 2 / rz ** 2
        return a * smooth_bump(rho2)
    if recipe["kind"] == "ring":
        r0 = float(recipe.get("radius", 0.5))
        w = float(recipe.get("width", 0.2))
        cz = float(recipe.get("z_center", grid.h / 2))
        rz = float(recipe.get("height", grid.h / 3))
        rho2 = ((np.hypot(X, Y) - r0) / w) ** 2 + ((Z - cz) / rz) ** 2
        return a * smooth_bump(rho2)
    raise ValueError(f"unknown F recipe kind {recipe['kind']!r}; valid kinds: {', '.join(F_KINDS)}")


def dirichlet_eigenfunction(grid: CylGrid, m=0, n=1):
    """``J_m(j_{m,n} r) cos(m theta)`` on the disk nodes, and its eigenvalue root."""
    k = float(jn_zeros(m, n)[-1])
    R, TH = np.meshgrid(grid.r_nodes, grid.theta_nodes, indexing="ij")
    return jv(m, k * R) * np.cos(m * TH), k


def surface_recipe(grid: CylGrid, recipe: dict):
    X, Y = grid.disk_xy()
    a = float(recipe.get("amplitude", 1.0))
    if recipe["kind"] == "bump":
        cx, cy = recipe.get("center", [0.0, 0.0])
        rh = float(recipe.get("radius", 0.3))
        return a * smooth_bump(((X - cx) ** 2 + (Y - cy) ** 2) / rh ** 2)
    if recipe["kind"] == "eigenfunction":
        return a * dirichlet_eigenfunction(grid, int(recipe.get("m", 0)), int(recipe.get("n", 1)))[0]
    raise ValueError(f"unknown G recipe kind {recipe['kind']!r}; valid kinds: {', '.join(G_KINDS)}")


def compatible_j(grid: CylGrid, profile, F, G_bottom, G_top):
    """Constant j closing the integral solvability condition."""
    lids = (float(profile(0.0)) * grid.integrate_disk(G_bottom)
            + float(profile(grid.h)) * grid.integrate_disk(G_top))
    return np.full(grid.n_z, (grid.integrate(F) - lids) / (2.0 * np.pi * grid.integrate_z(np.ones(grid.n_z))))


def read_j_csv(path, n_z):
    vals = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip():
                continue
            try:
                vals.append(float(row[0]))
            except ValueError:
                if vals:
                    raise
    if len(vals) != n_z:
        raise ValueError(f"{path}: expected {n_z} j values, found {len(vals)}")
    return np.array(vals)


def build_initial_data(grid: CylGrid, profile, spec: dict, base_dir=None) -> EllipticData:
    """Assemble (F, G_bottom, G_top, j) from an ``initial`` config section."""
    scale = float(spec.get("scale", 1.0))
    F = np.zeros(grid.shape)
    for rec in spec.get("F", []):
        F += volume_recipe(grid, rec)
    G = {}
    for surf in ("bottom", "top"):
        G[surf] = np.zeros(grid.disk_shape)
        for rec in spec.get(f"G_{surf}", []):
            G[surf] += surface_recipe(grid, rec)
    F, G["bottom"], G["top"] = scale * F, scale * G["bottom"], scale * G["top"]
    jspec = spec.get("j", {"kind": "compatible"})
    kind = jspec.get("kind")
    if kind == "compatible":
        j = compatible_j(grid, profile, F, G["bottom"], G["top"])
    elif kind == "constant":
        j = np.full(grid.n_z, scale * float(jspec["value"]))
    elif kind == "array":
        j = scale * np.asarray(jspec["values"], dtype=float)
    elif kind == "csv":
        p = Path(jspec["path"])
        if base_dir is not None and not p.is_absolute():
            p = Path(base_dir) / p
        j = scale * read_j_csv(p, grid.n_z)
    else:
        raise ValueError(f"unknown j kind {kind!r}; valid kinds: {', '.join(J_KINDS)}")
    return EllipticData(ScalarField3D(grid, F), SurfaceField(grid, "bottom", G["bottom"]),
                        SurfaceField(grid, "top", G["top"]), j)


def seed_particles(grid: CylGrid, spec: dict, per_bump=32) -> ParticleSet:
    """Markers on the support boundary of every bump in the recipe.

    Interior bumps are seeded on their widest horizontal circle at the
    nearest z level; lid bumps on their support circle on the lid.
    """
    ang = 2 * np.pi * np.arange(per_bump) / per_bump
    pos, lab = [], []

    def ring(cx, cy, rad, k):
        p = np.stack([cx + rad * np.cos(ang), cy + rad * np.sin(ang)], axis=1)
        r = np.hypot(p[:, 0], p[:, 1])
        p[r > 1.0] *= (1.0 / r[r > 1.0])[:, None]
        pos.append(p)
        lab.append(np.full(per_bump, k))

    for rec in spec.get("F", []):
        if rec["kind"] == "bump":
            cx, cy, cz = rec.get("center", [0.0, 0.0, grid.h / 2])
            ring(cx, cy, float(rec.get("radius", 0.3)), int(np.argmin(np.abs(grid.z_nodes - cz))))
        elif rec["kind"] == "ring":
            cz = float(rec.get("z_center", grid.h / 2))
            k = int(np.argmin(np.abs(grid.z_nodes - cz)))
            ring(0.0, 0.0, float(rec.get("radius", 0.5)) + float(rec.get("width", 0.2)), k)
    for surf, k in (("bottom", 0), ("top", grid.n_z - 1)):
        for rec in spec.get(f"G_{surf}", []):
            if rec["kind"] == "bump":
                cx, cy = rec.get("center", [0.0, 0.0])
                ring(cx, cy, float(rec.get("radius", 0.3)), k)
    if not pos:
        return ParticleSet(np.zeros((0, 2)), np.zeros(0, dtype=int))
    return ParticleSet(np.concatenate(pos), np.concatenate(lab))
