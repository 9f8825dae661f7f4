#include "crowdnav/eth_format.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <fmt/core.h>

#include "crowdnav/crowd.hpp"

namespace crowdnav {

EthData load_eth_format(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read ETH file " + path.string());

  struct Obs {
    long frame;
    Vec2 p;
  };
  std::map<int, std::vector<Obs>> by_ped;
  EthData data;
  std::string line;
  long line_no = 0;
  std::size_t valid = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    double frame = 0, ped = 0, x = 0, y = 0;
    std::string rest;
    if (!(fields >> frame >> ped >> x >> y) || (fields >> rest) || !std::isfinite(x) ||
        !std::isfinite(y) || frame != std::floor(frame) || ped != std::floor(ped)) {
      data.issues.push_back(fmt::format("line {}: expected 'frame ped x y'", line_no));
      continue;
    }
    by_ped[static_cast<int>(ped)].push_back({static_cast<long>(frame), Vec2(x, y)});
    ++valid;
  }
  if (valid == 0) throw std::runtime_error("ETH file " + path.string() + ": no valid lines");

  long step = std::numeric_limits<long>::max();
  for (auto& [id, obs] : by_ped) {
    std::stable_sort(obs.begin(), obs.end(),
                     [](const Obs& a, const Obs& b) { return a.frame < b.frame; });
    EthTrack track;
    track.ped_id = id;
    for (const auto& o : obs) {
      if (!track.frames.empty() && track.frames.back() == o.frame) {
        data.issues.push_back(fmt::format("ped {}: duplicate frame {} ignored", id, o.frame));
        continue;
      }
      if (!track.frames.empty()) step = std::min(step, o.frame - track.frames.back());
      track.frames.push_back(o.frame);
      track.positions.push_back(o.p);
    }
    data.tracks.push_back(std::move(track));
  }
  data.frame_step = step == std::numeric_limits<long>::max() ? 0 : step;
  return data;
}

void write_eth_format(const std::filesystem::path& path, const EthData& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write ETH file " + path.string());
  for (const auto& t : data.tracks) {
    for (std::size_t i = 0; i < t.frames.size(); ++i) {
      out << fmt::format("{}\t{}\t{}\t{}\n", t.frames[i], t.ped_id, t.positions[i].x(),
                         t.positions[i].y());
    }
  }
}

std::vector<TrainingExample> eth_windows(const EthData& data, int history_length, int horizon,
                                         double dt_obs, int stride) {
  std::vector<Path2> runs;
  std::vector<int> ids;
  for (const auto& t : data.tracks) {
    Path2 run;
    for (std::size_t i = 0; i < t.frames.size(); ++i) {
      if (i > 0 && t.frames[i] - t.frames[i - 1] != data.frame_step) {
        runs.push_back(std::move(run));
        ids.push_back(t.ped_id);
        run.clear();
      }
      run.push_back(t.positions[i]);
    }
    runs.push_back(std::move(run));
    ids.push_back(t.ped_id);
  }
  return windows_from_tracks(runs, ids, history_length, horizon, dt_obs, stride);
}

}  // namespace crowdnav
