#pragma once

// Umbrella header.

#include "poe/errors.hpp"
#include "poe/mesh.hpp"
#include "poe/mesh_io.hpp"
#include "poe/cells.hpp"
#include "poe/rotation.hpp"
#include "poe/arap.hpp"
#include "poe/chamfer.hpp"
#include "poe/keypoints.hpp"
#include "poe/pcc.hpp"
#include "poe/features.hpp"
#include "poe/wav.hpp"
#include "poe/mlp.hpp"
#include "poe/knn.hpp"
#include "poe/deepsoro.hpp"
#include "poe/model_io.hpp"
#include "poe/acoustic_model.hpp"
#include "poe/dataset.hpp"
#include "poe/eval.hpp"
