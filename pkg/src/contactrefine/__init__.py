"""Contact-driven refinement of interacting articulated bodies."""
from . import geometry
from .body_model import BodyModel, PoseState, load_model, skin, synth_humanoid
from .camera import PerspectiveCam, WeakPerspective, estimate_translation, solve_weak_perspective
from .contact import ContactSignature, contact_loss, gt_signature, region_distance
from .refine import (GmmPrior, RefineConfig, SceneState, default_prior, penetration_loss,
                     refine_full, refine_scene, refine_translation, total_loss)

__version__ = "0.1.0"
