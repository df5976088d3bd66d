"""Pure numpy kernels, used when the compiled extension is not available."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

# rows per chunk when materialising sliding windows
_CHUNK_ELEMENTS = 1 << 22


def median_filter(x, window):
    """Centered running median with half-sample symmetric padding.

    ``window`` must be odd; the caller validates it against ``len(x)``.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    half = window // 2
    padded = np.pad(x, half, mode="symmetric")
    views = sliding_window_view(padded, window)
    out = np.empty(x.shape[0], dtype=np.float64)
    rows = max(1, _CHUNK_ELEMENTS // window)
    for start in range(0, x.shape[0], rows):
        stop = min(start + rows, x.shape[0])
        out[start:stop] = np.median(views[start:stop], axis=1)
    return out


def decode_212(buf, n_samples):
    raw = np.frombuffer(buf, dtype=np.uint8, count=3 * n_samples).astype(np.int16)
    raw = raw.reshape(n_samples, 3)
    s0 = raw[:, 0] | ((raw[:, 1] & 0x0F) << 8)
    s1 = raw[:, 2] | ((raw[:, 1] & 0xF0) << 4)
    s0[s0 > 2047] -= 4096
    s1[s1 > 2047] -= 4096
    return s0, s1


def encode_212(ch0, ch1):
    a = np.asarray(ch0, dtype=np.int64) & 0xFFF
    b = np.asarray(ch1, dtype=np.int64) & 0xFFF
    out = np.empty((a.shape[0], 3), dtype=np.uint8)
    out[:, 0] = a & 0xFF
    out[:, 1] = ((a >> 8) & 0x0F) | ((b >> 4) & 0xF0)
    out[:, 2] = b & 0xFF
    return out.tobytes()
