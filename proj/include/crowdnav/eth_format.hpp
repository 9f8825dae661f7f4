#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "crowdnav/learned_predictor.hpp"

namespace crowdnav {

/// One pedestrian's observations from an ETH-style annotation file.
struct EthTrack {
  int ped_id = 0;
  std::vector<long> frames;  // strictly increasing
  Path2 positions;
};

struct EthData {
  std::vector<EthTrack> tracks;    // ordered by ped_id
  std::vector<std::string> issues;  // "line N: ..." for skipped lines
  long frame_step = 0;             // smallest positive frame difference seen
};

/// Reads whitespace-separated "frame_id ped_id x y" lines. Blank lines and
/// lines starting with '#' are ignored; malformed lines are reported in
/// `issues`. Throws std::runtime_error when the file cannot be read or
/// contains no valid line ("no valid lines").
EthData load_eth_format(const std::filesystem::path& path);

void write_eth_format(const std::filesystem::path& path, const EthData& data);

/// Sliding (history_length, horizon) windows over runs of consecutive frames
/// (frame difference == frame_step). Gaps split a track.
std::vector<TrainingExample> eth_windows(const EthData& data, int history_length, int horizon,
                                         double dt_obs, int stride = 1);

}  // namespace crowdnav
