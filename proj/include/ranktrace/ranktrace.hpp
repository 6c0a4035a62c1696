#pragma once

#include "ranktrace/error.hpp"
#include "ranktrace/linalg.hpp"
#include "ranktrace/rng.hpp"
#include "ranktrace/netcore.hpp"
#include "ranktrace/noisekit.hpp"
#include "ranktrace/trainer.hpp"
#include "ranktrace/datagen.hpp"
#include "ranktrace/dataset_io.hpp"
#include "ranktrace/oracle.hpp"
#include "ranktrace/trajectory_csv.hpp"
#include "ranktrace/recipe.hpp"
