# waveop PyTorch utils

import logging
import time

import numpy as np
import torch
import torch.backends.cudnn as cudnn
import torch.nn.functional as F

logger = logging.getLogger(__name__)


def init_torch_seeds(seed=0):
    # Speed-reproducibility tradeoff https://pytorch.org/docs/stable/notes/randomness.html
    torch.manual_seed(seed)
    cudnn.benchmark, cudnn.deterministic = False, True


def select_device(device=''):
    # device = 'cpu' or 'cuda:0'; empty picks cuda when available
    if device:
        return torch.device(device)
    return torch.device('cuda:0' if torch.cuda.is_available() else 'cpu')


def time_synchronized():
    # pytorch-accurate time
    if torch.cuda.is_available():
        torch.cuda.synchronize()
    return time.time()


def periodic_trilinear(values, origin, spacing, points, device=None):
    """Trilinear interpolation of a periodic complex grid at arbitrary points.

    values: (N0, N1, N2) complex array, axis i along coordinate i.
    points: (M, 3) physical coordinates, wrapped into the period box.
    Returns an (M,) complex128 array.
    """
    device = device or select_device('cpu')
    values = np.asarray(values)
    shape = np.array(values.shape)
    u = (np.asarray(points, dtype=np.float64) - np.asarray(origin)) / spacing
    u = np.mod(u, shape)  # [0, N)

    # two real channels, padded by one periodic layer so index N is valid
    vol = np.stack([values.real, values.imag]).astype(np.float64)
    t = torch.from_numpy(vol).to(device)[None]  # (1, 2, N0, N1, N2)
    t = F.pad(t, (0, 1, 0, 1, 0, 1), mode='circular')

    # grid_sample wants (x, y, z) = (W, H, D) = (axis2, axis1, axis0) in [-1, 1]
    g = 2.0 * u / shape - 1.0
    g = torch.from_numpy(g[:, ::-1].copy()).to(device).view(1, 1, 1, -1, 3)
    out = F.grid_sample(t, g, mode='bilinear', padding_mode='border', align_corners=True)
    out = out.view(2, -1).cpu().numpy()
    return out[0] + 1j * out[1]
