#pragma once

#include <span>
#include <string>
#include <vector>

namespace convexecg::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color;
  bool markers_only = false;
};

struct Panel {
  std::string title;
  std::vector<Series> series;
  // Optional vertical marker at this x (e.g. end of the training window).
  std::vector<double> vlines;
};

// Stacked panels sharing one canvas width. Data points are also emitted in an
// XML comment so the file carries its own numbers.
std::string render(const std::string& title, const std::vector<Panel>& panels,
                   int width = 900, int panel_height = 160);

void write_file(const std::string& path, const std::string& content);

}  // namespace convexecg::svg
