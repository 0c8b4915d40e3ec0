#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace convexecg {

struct Channel {
  std::string label;
  std::vector<double> samples;  // millivolts

  friend bool operator==(const Channel&, const Channel&) = default;
};

// Multi-channel waveform sampled at a common rate.
//
// Invariants, enforced at construction:
//   - at least one channel, every channel has the same length >= 2
//   - sample_rate_hz > 0 and finite
//   - labels are unique, non-empty, restricted to [A-Za-z0-9_]
//   - every sample is finite
class EcgRecord {
 public:
  EcgRecord(double sample_rate_hz, std::vector<Channel> channels);

  double sample_rate_hz() const noexcept { return sample_rate_hz_; }
  std::size_t length() const noexcept { return channels_.front().samples.size(); }
  std::size_t channel_count() const noexcept { return channels_.size(); }
  const std::vector<Channel>& channels() const noexcept { return channels_; }

  bool has_channel(const std::string& label) const;
  // Throws Error naming the label when absent.
  std::span<const double> channel(const std::string& label) const;
  std::vector<std::string> labels() const;

  friend bool operator==(const EcgRecord&, const EcgRecord&) = default;

 private:
  double sample_rate_hz_;
  std::vector<Channel> channels_;
};

// Reads the CSV dialect: header "t,<label>,<label>,...", one row per sample,
// comma separated, LF or CRLF. The first column is a time index and is
// ignored. The sample rate is not stored in the file. Errors are ParseError
// with the offending line number.
EcgRecord read_record(std::istream& source, double sample_rate_hz);
EcgRecord read_record_file(const std::string& path, double sample_rate_hz);

// Writes the same dialect. The time column holds the sample index.
void write_record(const EcgRecord& record, std::ostream& sink);
void write_record_file(const EcgRecord& record, const std::string& path);

bool is_valid_label(const std::string& label);

}  // namespace convexecg
