import numpy as np
import pytest


def random_rotation(rng):
    """Uniform-ish random proper rotation via QR with sign fix."""
    mat = rng.normal(size=(3, 3))
    q, r = np.linalg.qr(mat)
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def rodrigues(axis, angle):
    """Independent axis-angle rotation builder for use as a test oracle."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    k = np.array([[0.0, -axis[2], axis[1]],
                  [axis[2], 0.0, -axis[0]],
                  [-axis[1], axis[0], 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def rotation_angle_between(ra, rb):
    """Angle in radians separating two rotation matrices.

    Uses |dR - I|_F = 2*sqrt(2)*|sin(theta/2)|, which stays accurate for
    tiny angles where the arccos-of-trace form loses half the digits.
    """
    delta = ra.T @ rb
    s = np.linalg.norm(delta - np.eye(3)) / (2.0 * np.sqrt(2.0))
    return float(2.0 * np.arcsin(min(1.0, s)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
