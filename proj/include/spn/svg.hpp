#pragma once

#include <string>
#include <vector>

namespace spn {

// Minimal data-only SVG writer; no external renderer involved.
class SvgBuilder {
 public:
  SvgBuilder(int width, int height);

  void line(double x1, double y1, double x2, double y2,
            const std::string& stroke, double width = 1.0,
            const std::string& dash = "");
  void polyline(const std::vector<std::pair<double, double>>& points,
                const std::string& stroke, double width = 1.0,
                const std::string& dash = "");
  void circle(double cx, double cy, double r, const std::string& fill);
  void rect(double x, double y, double w, double h, const std::string& fill);
  void text(double x, double y, const std::string& content, int size = 11,
            const std::string& anchor = "start");

  std::string str() const;
  void save(const std::string& path) const;

 private:
  int width_, height_;
  std::vector<std::string> elements_;
};

}  // namespace spn
