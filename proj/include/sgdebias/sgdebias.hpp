#pragma once

#include "sgdebias/analysis.hpp"
#include "sgdebias/boot_calibrate.hpp"
#include "sgdebias/dataset_io.hpp"
#include "sgdebias/design.hpp"
#include "sgdebias/errors.hpp"
#include "sgdebias/glm_core.hpp"
#include "sgdebias/pipeline.hpp"
#include "sgdebias/report_io.hpp"
#include "sgdebias/rsplit.hpp"
#include "sgdebias/sensitivity.hpp"
#include "sgdebias/sim_engine.hpp"
#include "sgdebias/sparse_select.hpp"
#include "sgdebias/streams.hpp"
#include "sgdebias/tuning.hpp"
