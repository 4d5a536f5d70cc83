#pragma once

#include "semstab/common.hpp"
#include "semstab/corpus.hpp"
#include "semstab/embedding.hpp"
#include "semstab/sgns.hpp"
#include "semstab/store.hpp"
#include "semstab/align.hpp"
#include "semstab/metrics.hpp"
#include "semstab/viz.hpp"
#include "semstab/synth.hpp"
#include "semstab/pipeline.hpp"
