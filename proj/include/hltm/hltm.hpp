#pragma once

#include "hltm/backend.hpp"
#include "hltm/common.hpp"
#include "hltm/corpus.hpp"
#include "hltm/gibbs.hpp"
#include "hltm/io.hpp"
#include "hltm/logreg.hpp"
#include "hltm/metrics.hpp"
#include "hltm/model.hpp"
#include "hltm/refine.hpp"
#include "hltm/simulate.hpp"
#include "hltm/stats.hpp"
#include "hltm/users.hpp"
#include "hltm/vb.hpp"
