#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "crowdnav/simlog.hpp"

namespace crowdnav {

inline constexpr const char* kSimLogSchema = "crowdnav.simlog/1";

/// Corrupt, truncated or schema-mismatched log.
class LogFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Newline-delimited JSON: one header record, one record per cycle, one
/// verdict record. Doubles round-trip exactly; an infinite cost is written
/// as null.
void write_simlog(std::ostream& out, const SimLog& log);
SimLog read_simlog(std::istream& in);
void save_simlog(const std::filesystem::path& path, const SimLog& log);
SimLog load_simlog(const std::filesystem::path& path);

/// Serialized text and its FNV-1a digest (16 hex digits).
std::string serialize_simlog(const SimLog& log);
std::string simlog_digest(const SimLog& log);

/// Flat per-cycle projection for plotting:
/// cycle,time,x,y,theta,v,omega,status,p<i>_x,p<i>_y,...
void write_simlog_csv(std::ostream& out, const SimLog& log);
/// cycle,solve_time
void write_timing_csv(std::ostream& out, const SimLog& log);

}  // namespace crowdnav
