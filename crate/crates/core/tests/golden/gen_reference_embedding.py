"""Independent oracle for the reference embedder golden vectors.

Area averaging is done by 4x pixel replication (220 * 4 = 16 * 55) followed
by 55x55 block means, so no fractional coverage weights are involved.
"""
import json
import numpy as np

M = 6364136223846793005
C = 1442695040888963407
MASK = (1 << 64) - 1


def signs(seed, n):
    s = seed
    out = []
    for _ in range(n):
        s = (s * M + C) & MASK
        out.append(1.0 if s >> 63 == 0 else -1.0)
    return out


def embed(rgb):
    side = rgb.shape[0]
    assert side == 220
    f = rgb.astype(np.float64)
    gray = (299 * f[..., 0] + 587 * f[..., 1] + 114 * f[..., 2]) / 1000.0
    up = np.repeat(np.repeat(gray, 4, axis=0), 4, axis=1)
    grid = up.reshape(16, 55, 16, 55).mean(axis=(1, 3)) / 255.0
    s = signs(42, 128 * 256 + 128)
    w = np.array(s[: 128 * 256]).reshape(128, 256)
    b = np.array(s[128 * 256 :])
    raw = w @ grid.reshape(256) + b
    return (raw / np.linalg.norm(raw)).tolist()


def pattern():
    y, x = np.mgrid[0:220, 0:220]
    return np.stack([(x * 7 + y * 3) % 256, (x * y) % 256, (x + 2 * y) % 256], axis=-1).astype(np.uint8)


if __name__ == "__main__":
    out = {
        "black": embed(np.zeros((220, 220, 3), dtype=np.uint8)),
        "pattern": embed(pattern()),
    }
    with open("reference_embedding.json", "w") as f:
        json.dump(out, f, indent=1)
        f.write("\n")
