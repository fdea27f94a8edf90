#pragma once

#include "avgann/errors.hpp"
#include "avgann/eval.hpp"
#include "avgann/forest.hpp"
#include "avgann/index_io.hpp"
#include "avgann/io.hpp"
#include "avgann/lsh.hpp"
#include "avgann/mazur.hpp"
#include "avgann/metric.hpp"
#include "avgann/report.hpp"
