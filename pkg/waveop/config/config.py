CONVENTION_VERSION = 'ft-nonunitary-v1'  # forward FT without prefactor, inverse carries (2*pi)^-3

# ray transform
TAU_POINTS = 2048
TAU_TAIL_TOL = 1e-12
R_MAX_SCALE = 40.0  # r window in units of the potential's length scale
R_STEP_SCALE = 0.05
R_WINDOW_GROWTH = 0.001  # last decade of r may carry at most this share of the L1 mass
L_TOL = 1e-6
DYADIC_MASS_TOL = 1e-10
FILON_SMALL_THETA = 5e-2  # series branch below; the closed form cancels badly for small theta

# direction sets
DIRS_ORDER = 16  # Gauss-Legendre nodes in cos(theta); 2x as many in phi
NORMALS_ORDER = 8  # 64 plane normals (upper half of the 8 x 16 product rule) for the sup in the B norm
LEBEDEV_ORDER = 17

# plane slices
S_POINTS = 49  # odd, so s = 0 is a node
S_WINDOW_SCALE = 40.0  # offsets |s| <= 40 length scales on a sinh-mapped grid
SLICE_GRID = 128
SLICE_BOX_SCALE = 24.0
SLICE_PHI_POINTS = 64

# dyadic norms
SHELL_POINTS = 64
DYADIC_WINDOW = (-64, 80)  # shells k relative to floor(log2 length_scale)

# fields and oracles
GRID_N = 64
BOX_SCALE = 24.0
BUFFER_MASS_TOL = 1e-6
EPS = 0.05
EPS_SCHEDULE = (0.05, 0.025)
DUHAMEL_T_MAX = 200.0
DUHAMEL_DT = 0.01
DUHAMEL_HORIZON_TOL = 1e-4  # e^{-eps t_max} must fall below this
CROSS_ORACLE_EPS = 1.0  # shared eps of the stationary and time-domain pairs; damps periodic images on a 24-wide box
CROSS_ORACLE_FLOOR = 1e-3  # pair errors below this need not shrink further under refinement
FREQ_RADIAL_NODES = 8  # Gauss-Legendre nodes per |eta| panel
FREQ_PANEL_SCALE = 6.0  # panel width 6 / box
FREQ_MASS_TOL = 1e-14  # share of |f^|^2 outside the |eta| window
FREQ_ANGULAR_ORDER = 8
K_POINTS = 400
K_MAX = 12.0  # in units of 1/length scale of f
JOST_R_MAX = 60.0  # in units of the larger of the two length scales
JOST_DR_SCALE = 0.02
JOST_PHASE_SIGN = -1  # W+ uses the resolvent at k^2 - i0: psi = e^{-i delta} psi_k
JOST_RTOL = 1e-10
BORN_N_MAX = 8
BORN_TOL = 1e-4

# structure
KL_CONSTANT = 1j / (16 * 3.141592653589793 ** 3)
YPRIME_N = 8  # radial Gauss-Legendre nodes of the y' grid
YPRIME_ORDER = 3  # angular order of the y' grid
YPRIME_RHO_SCALE = 4.0  # |y'| <= 4 length scales
YPRIME_TAIL_TOL = 0.25  # K1 mass allowed beyond the y' window
U_GRID = 32  # grid of the modulated potentials K1(., y') V
U_BOX_SCALE = 6.0
SUPPORT_TOL = 1e-8  # |f| > tol * max defines the numerical support
INTERPOLATION = 'trilinear'
BOX_MARGIN = 0.25  # fraction of the box translates may leave before the box is rejected

# kernels
KERNEL_SAMPLES = 20
KERNEL_QUAD_N = 24
POLAR_RADIUS_CELLS = 1.5
NEUMANN_N = 4
POLAR_RADIAL_N = 8
POLAR_ANGULAR_ORDER = 6
COMPOSE_TOL = 1e-2  # polar refinement may move the result by at most this share
KERNEL_CHAIN_N = 64
KERNEL_BOX_SCALE = 6.0  # quadrature box half-width cap, in length scales
CHAIN_DAMP_SCALE = 2.0  # damping 2 / length scale of the subtracted singular part
PROLATE_NODES = (8, 32, 32)  # per-panel t nodes, theta nodes, phi nodes
KEY_OMEGA_ORDER = 2
KEY_T_N = 8
KEY_L_ORDER = 6

# gate
C0 = 1.0
BORN_RATIO_TARGET = 0.5

# run
SEED = 0
WORKERS = 4
OUT_DIR = 'runs'
CACHE_ENV = 'WAVEOP_CACHE'
CACHE_DIR = '.waveop_cache'

# exit codes
EXIT_OK = 0
EXIT_GATE = 2
EXIT_RESOLUTION = 3
EXIT_CONFIG = 4
