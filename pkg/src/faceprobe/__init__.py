"""Head-model fitting, deterministic rendering, and recognition-bias probes."""

from .model import (FaceModel, Joint, Mesh, ModelParams, instantiate,
                    landmarks3d, load_model, save_model, zero_params)
from .render import CameraParams, LightingParams, default_camera, project, render_mesh
from .images import Image, read_image, write_pgm, write_ppm
from .fitting import FitConfig, FitResult, LandmarkSet, fit_landmarks, residuals
from .sweep import SweepFrame, SweepSpec, generate_sweep, k_grid, render_sweep
from .recognize import (EMBED_DIM, ExternalBackend, Gallery, StubBackend,
                        classify, embed_stub, enroll)
from .diagnose import ResponseCurve, accuracy, run_diagnosis, write_curve
from .augment import (POSE_BIN_EDGES, ParamTrace, assign_pose_bin, balance_batches,
                      build_augmented_manifest, select_test_frames, select_train_frames)
from .losses import (FeatureMap, LossWeights, cycle_losses, gan_loss_global,
                     gan_loss_patch, style_losses, total_objective, weighted_feature_l1)
from .synth import aligned_cohort_params, random_identity_params, synth_head

__version__ = "0.1.0"
