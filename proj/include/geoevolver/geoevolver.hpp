#pragma once

#include "geoevolver/core.hpp"
#include "geoevolver/embedding.hpp"
#include "geoevolver/evolution.hpp"
#include "geoevolver/exploration.hpp"
#include "geoevolver/harness.hpp"
#include "geoevolver/memory_bank.hpp"
#include "geoevolver/metrics.hpp"
#include "geoevolver/pipeline.hpp"
#include "geoevolver/prompts.hpp"
#include "geoevolver/provider.hpp"
#include "geoevolver/tools.hpp"
