from __future__ import annotations

from pathlib import Path

import numpy as np

from cmclab.constants import OBJ_SIGNIFICANT_DIGITS
from cmclab.utils.data_handling import atomic_write_text


def grid_triangles(nx: int, ny: int) -> np.ndarray:
    """Two triangles per grid quad, vertex index ``i * ny + j`` (0-based).

    Args:
        nx (int): Nodes in x
        ny (int): Nodes in y

    Returns:
        np.ndarray: Integer array of shape (2 (nx-1)(ny-1), 3)
    """
    i, j = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing="ij")
    v00 = (i * ny + j).ravel()
    v10 = ((i + 1) * ny + j).ravel()
    v01 = (i * ny + j + 1).ravel()
    v11 = ((i + 1) * ny + j + 1).ravel()
    lower = np.stack([v00, v10, v11], axis=-1)
    upper = np.stack([v00, v11, v01], axis=-1)
    return np.stack([lower, upper], axis=1).reshape(-1, 3)


def triangle_areas(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    a, b, c = (vertices[faces[:, k]] for k in range(3))
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=-1)


def write_obj(path: Path | str, vertices: np.ndarray, faces: np.ndarray, comment: str = "") -> Path:
    """Write an ASCII OBJ mesh (1-based faces, 9 significant digits).

    Args:
        path (Path | str): Destination
        vertices (np.ndarray): Array of shape (n, 3)
        faces (np.ndarray): 0-based triangle indices, shape (m, 3)
        comment (str, optional): Header comment. Defaults to "".

    Returns:
        Path: The destination path
    """
    fmt = f"{{:.{OBJ_SIGNIFICANT_DIGITS}g}}"
    lines = [f"# {line}" for line in comment.splitlines()]
    lines += ["v " + " ".join(fmt.format(float(c)) for c in v) for v in vertices]
    lines += ["f " + " ".join(str(int(k) + 1) for k in face) for face in faces]
    return atomic_write_text(path, "\n".join(lines) + "\n")


def read_obj(path: Path | str) -> tuple[np.ndarray, np.ndarray]:
    """Read vertices and 0-based triangle faces of an OBJ written by :func:`write_obj`."""
    vertices, faces = [], []
    with open(path, "r") as handle:
        for line in handle:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                vertices.append([float(p) for p in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    return (
        np.asarray(vertices, dtype=np.float64).reshape(-1, 3),
        np.asarray(faces, dtype=np.int64).reshape(-1, 3),
    )
