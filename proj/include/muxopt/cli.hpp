#pragma once

// Batch subcommands behind the muxopt executable. Each returns the process
// exit code and writes diagnostics to `log`.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

namespace mux::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNotConverged = 3;
inline constexpr int kExitVerdictFail = 4;
inline constexpr int kExitChart = 5;

// Writes trajectory.csv, controls.csv, summary.yaml and scenario.yaml into
// out_dir. Exit 0 when converged, 3 otherwise, 2 on bad input.
int cmd_solve(const std::filesystem::path& scenario_path, const std::filesystem::path& out_dir,
              std::optional<std::uint64_t> seed, std::ostream& log);

// Writes the report to `report`. Exit 0 on pass, 4 on fail, 2 on bad input.
int cmd_verify(const std::filesystem::path& scenario_path,
               const std::filesystem::path& trajectory_path, double tolerance_scale,
               std::ostream& report, std::ostream& log);

// Writes trajectory.csv and summary.yaml into out_dir. Exit 5 when a step
// leaves the chart (the trajectory up to that step is still written), 2 on
// bad input.
int cmd_simulate(const std::filesystem::path& scenario_path,
                 const std::filesystem::path& controls_path, const std::filesystem::path& out_dir,
                 std::ostream& log);

}  // namespace mux::cli
