#pragma once

#include "ffnlens/analysis.hpp"
#include "ffnlens/corpus.hpp"
#include "ffnlens/manifest.hpp"
#include "ffnlens/metrics.hpp"
#include "ffnlens/report.hpp"
#include "ffnlens/snapshot.hpp"
#include "ffnlens/toy_model.hpp"
