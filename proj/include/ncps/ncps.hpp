#pragma once

#include "ncps/analysis.hpp"
#include "ncps/brownian.hpp"
#include "ncps/commands.hpp"
#include "ncps/config.hpp"
#include "ncps/core_model.hpp"
#include "ncps/errors.hpp"
#include "ncps/implicit_step.hpp"
#include "ncps/oracles.hpp"
#include "ncps/schemes.hpp"
