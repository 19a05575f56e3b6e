#pragma once

// Umbrella header: pulls in the whole library.

#include "pancut/affinity.hpp"
#include "pancut/errors.hpp"
#include "pancut/eval.hpp"
#include "pancut/grounding.hpp"
#include "pancut/image_io.hpp"
#include "pancut/manifest.hpp"
#include "pancut/mask_refine.hpp"
#include "pancut/npy.hpp"
#include "pancut/panoptic_cut.hpp"
#include "pancut/pipeline.hpp"
#include "pancut/spectral.hpp"
#include "pancut/tensor_io.hpp"
#include "pancut/types.hpp"
