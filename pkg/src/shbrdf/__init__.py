"""Spatially-varying BRDF recovery from photographs of a known shape
under a known environment, via spherical-harmonics power spectra.

The pipeline projects multi-view photographs onto UV texels, fits a
sparse regularized spherical-harmonics expansion of per-texel outgoing
radiance, identifies specular roughness by matching the outgoing/incoming
power-spectrum ratio against an isotropic low-pass filter family, scores
the identification with a posterior-entropy confidence, and refines all
principled-material parameters with a differentiable render loss.
"""

from .brdf import (BrdfParams, PrincipledParams, ShadingContext,
                   filter_coeff, filter_kernel, fresnel_schlick,
                   principled_to_ts, render_outgoing, smith_g1)
from .errors import (DegenerateIrradiance, InsufficientSamples, IoFailure,
                     LayoutMismatch, NonFiniteLoss, NonHdrInput, ShBrdfError,
                     SingularSystem, UnsupportedFormat)
from .exr import read_exr, write_exr
from .mesh import (SurfaceGeometry, TexelTable, build_texel_table, load_obj,
                   make_uv_sphere, save_obj, tangent_frame)
from .optimize import (MixedPipelineLoss, OptimizerConfig, TexelRecord,
                       alpha_lower_bound, bandlimit_prefilter,
                       init_from_spectrum, sample_weight, spectrum_pair,
                       views_for_alpha)
from .pipeline import (entropy_map, fit_scene, merge_records,
                       prefilter_environment, records_to_stack)
from .raycast import RayCaster
from .scene import (CameraView, EnvironmentMap, build_texel_records,
                    export_textures, import_textures, load_cameras,
                    load_environment, project_observations, sample_incoming,
                    save_cameras, save_environment)
from .sh import (DirectionalSamples, SHExpansion, convolve_isotropic,
                 eval_sh_basis, fibonacci_hemisphere, fibonacci_sphere,
                 fit_dense, fit_sparse_regularized, power_spectrum,
                 zonal_kernel_spatial)
from .spectrum import (PosteriorGrid, SpectrumPair, entropy, grid_search,
                       identify_filter_alpha, merge_by_entropy,
                       recover_diffuse)
from .synth import (PRESETS, ParameterTexture, environment_suite,
                    generate_preset, orbit_views, parameter_mse,
                    render_views, smooth_parameter_texture)

__version__ = "0.1.0"
