// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rmot/annotator.hpp"
#include "rmot/assignment.hpp"
#include "rmot/data_model.hpp"
#include "rmot/error.hpp"
#include "rmot/fusion.hpp"
#include "rmot/geometry.hpp"
#include "rmot/hota.hpp"
#include "rmot/kitti_import.hpp"
#include "rmot/lifecycle.hpp"
#include "rmot/match_loss.hpp"
