#pragma once

#include <spdlog/logger.h>

namespace gpal {

/// Process-wide stderr logger. Level comes from GPAL_LOG
/// (error | warn | info | debug), default warn.
spdlog::logger& log();

}  // namespace gpal
