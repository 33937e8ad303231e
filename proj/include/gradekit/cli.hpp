// SPDX-License-Identifier: Apache-2.0
/**
 * @file   cli.hpp
 * @brief  Command-line driver: synth, train, predict, calibrate, combine,
 *         evaluate, report.
 *
 * Exit codes: 0 success, 1 usage error, 2 data or validation error,
 * 3 numerical failure.
 */
#pragma once

#include <span>
#include <string>

namespace gradekit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

/// `args` excludes the program name.
int run(std::span<const std::string> args);

}  // namespace gradekit::cli
