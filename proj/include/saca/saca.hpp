#pragma once

// Umbrella header.

#include "saca/rng.hpp"
#include "saca/grid.hpp"
#include "saca/perception.hpp"
#include "saca/episode.hpp"
#include "saca/auditor.hpp"
#include "saca/rollout.hpp"
#include "saca/generate.hpp"
#include "saca/policy.hpp"
#include "saca/advantage.hpp"
#include "saca/grouping.hpp"
#include "saca/objectives.hpp"
#include "saca/trainer.hpp"
#include "saca/io.hpp"
