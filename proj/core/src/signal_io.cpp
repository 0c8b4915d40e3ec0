#include "convexecg/signal_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "convexecg/error.hpp"
#include "convexecg/format.hpp"

namespace convexecg {

bool is_valid_label(const std::string& label) {
  if (label.empty()) return false;
  return std::all_of(label.begin(), label.end(), [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
  });
}

EcgRecord::EcgRecord(double sample_rate_hz, std::vector<Channel> channels)
    : sample_rate_hz_(sample_rate_hz), channels_(std::move(channels)) {
  if (!(sample_rate_hz_ > 0.0) || !std::isfinite(sample_rate_hz_)) {
    throw Error("sample rate must be positive and finite");
  }
  if (channels_.empty()) throw Error("record needs at least one channel");
  const std::size_t n = channels_.front().samples.size();
  std::set<std::string> seen;
  for (const auto& ch : channels_) {
    if (!is_valid_label(ch.label)) throw Error("invalid channel label '" + ch.label + "'");
    if (!seen.insert(ch.label).second) throw Error("duplicate channel label '" + ch.label + "'");
    if (ch.samples.size() != n) throw Error("channel '" + ch.label + "' has a different length");
    for (double v : ch.samples) {
      if (!std::isfinite(v)) throw Error("non-finite sample in channel '" + ch.label + "'");
    }
  }
  if (n < 2) throw Error("record length must be at least 2 samples");
}

bool EcgRecord::has_channel(const std::string& label) const {
  return std::any_of(channels_.begin(), channels_.end(),
                     [&](const Channel& c) { return c.label == label; });
}

std::span<const double> EcgRecord::channel(const std::string& label) const {
  for (const auto& ch : channels_) {
    if (ch.label == label) return ch.samples;
  }
  throw Error("missing channel '" + label + "'");
}

std::vector<std::string> EcgRecord::labels() const {
  std::vector<std::string> out;
  out.reserve(channels_.size());
  for (const auto& ch : channels_) out.push_back(ch.label);
  return out;
}

namespace {

bool next_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

}  // namespace

EcgRecord read_record(std::istream& source, double sample_rate_hz) {
  std::string line;
  std::size_t line_no = 0;
  if (!next_line(source, line)) throw ParseError(1, "missing header");
  ++line_no;
  if (trim(line).empty()) throw ParseError(line_no, "missing header");

  const auto header = split_view(line, ',');
  if (header.size() < 2) throw ParseError(line_no, "malformed header: need a time column and at least one channel");
  std::vector<Channel> channels;
  std::set<std::string> seen;
  for (std::size_t c = 1; c < header.size(); ++c) {
    std::string label(trim(header[c]));
    if (!is_valid_label(label)) {
      throw ParseError(line_no, "malformed header: invalid channel label '" + label + "'");
    }
    if (!seen.insert(label).second) {
      throw ParseError(line_no, "duplicate channel label '" + label + "'");
    }
    channels.push_back({std::move(label), {}});
  }

  while (next_line(source, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_view(line, ',');
    if (cells.size() != header.size()) {
      throw ParseError(line_no, "ragged row: expected " + std::to_string(header.size()) +
                                    " cells, found " + std::to_string(cells.size()));
    }
    for (std::size_t c = 1; c < cells.size(); ++c) {
      const auto v = parse_double(cells[c]);
      if (!v) {
        const std::string_view cell = trim(cells[c]);
        double raw = 0.0;
        const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), raw);
        const bool non_finite = ec == std::errc{} && end == cell.data() + cell.size() && !std::isfinite(raw);
        throw ParseError(line_no, std::string(non_finite ? "non-finite sample '" : "non-numeric cell '") +
                                      std::string(cell) + "' in column '" + channels[c - 1].label + "'");
      }
      channels[c - 1].samples.push_back(*v);
    }
  }
  if (source.bad()) throw ParseError(line_no, "read failure");

  try {
    return EcgRecord(sample_rate_hz, std::move(channels));
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(line_no, e.what());
  }
}

EcgRecord read_record_file(const std::string& path, double sample_rate_hz) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_record(in, sample_rate_hz);
}

void write_record(const EcgRecord& record, std::ostream& sink) {
  std::string out = "t";
  for (const auto& ch : record.channels()) {
    out += ',';
    out += ch.label;
  }
  out += '\n';
  for (std::size_t i = 0; i < record.length(); ++i) {
    out += std::to_string(i);
    for (const auto& ch : record.channels()) {
      out += ',';
      out += format_double(ch.samples[i]);
    }
    out += '\n';
  }
  sink.write(out.data(), static_cast<std::streamsize>(out.size()));
  sink.flush();
  if (!sink) throw Error("write failure");
}

void write_record_file(const EcgRecord& record, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_record(record, out);
}

}  // namespace convexecg
