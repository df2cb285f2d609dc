#include "twolevel/initial_spec.hpp"

#include <charconv>
#include <vector>

#include "twolevel/errors.hpp"
#include "twolevel/limit.hpp"

namespace twolevel {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

double number(std::string_view s, std::string_view whole) {
  s = trim(s);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ValidationError("initial measure '" + std::string(whole) + "': bad number '" + std::string(s) + "'");
  return v;
}

// Splits on `sep` outside brackets.
std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '[') ++depth;
    if (s[i] == ']') --depth;
    if (s[i] == sep && depth == 0) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  out.push_back(s.substr(start));
  return out;
}

std::vector<double> numbers(std::string_view args, std::size_t count, std::string_view whole) {
  std::vector<double> out;
  if (!args.empty())
    for (auto part : split(args, ',')) out.push_back(number(part, whole));
  if (out.size() != count)
    throw ValidationError("initial measure '" + std::string(whole) + "' expects " + std::to_string(count) +
                          " parameter(s)");
  return out;
}

}  // namespace

LimitMeasure parse_initial(std::string_view spec, double lambda) {
  const std::string_view s = trim(spec);
  const auto colon = s.find(':');
  const std::string_view head = s.substr(0, colon);
  const std::string_view args = colon == std::string_view::npos ? std::string_view{} : trim(s.substr(colon + 1));

  if (head == "uniform") {
    numbers(args, 0, s);
    return LimitMeasure(GridDensity::uniform());
  }
  if (head == "delta") {
    const double x = numbers(args, 1, s)[0];
    if (!(x >= 0.0 && x <= 1.0)) throw ValidationError("initial measure '" + std::string(s) + "': atom outside [0,1]");
    return LimitMeasure::delta(x);
  }
  if (head == "beta") {
    const auto v = numbers(args, 2, s);
    return LimitMeasure(BetaSpec(v[0], v[1]));
  }
  if (head == "mixture") {
    if (args.size() < 2 || args.front() != '[' || args.back() != ']')
      throw ValidationError("initial measure '" + std::string(s) + "': mixture needs [w*spec;...]");
    std::vector<std::pair<double, LimitMeasure>> parts;
    for (auto item : split(args.substr(1, args.size() - 2), ';')) {
      const auto star = item.find('*');
      if (star == std::string_view::npos)
        throw ValidationError("initial measure '" + std::string(s) + "': component '" + std::string(trim(item)) +
                              "' lacks a weight");
      parts.emplace_back(number(item.substr(0, star), s), parse_initial(item.substr(star + 1), lambda));
    }
    return LimitMeasure::mixture(std::move(parts));
  }
  if (head.size() == 8 && head.substr(0, 7) == "example" && head[7] >= '1' && head[7] <= '5') {
    const int id = head[7] - '0';
    ExampleParams p;
    if (id == 1) p.x0 = numbers(args, 1, s)[0];
    if (id == 2 || id == 3) numbers(args, 0, s);
    if (id == 4) p.c = numbers(args, 1, s)[0];
    if (id == 5) {
      const auto v = numbers(args, 2, s);
      p.a = v[0];
      p.alpha = v[1];
    }
    return example_initial(id, lambda, p);
  }
  throw ValidationError("unknown initial measure '" + std::string(s) + "'");
}

GridMeasure initial_on_lattice(std::string_view spec, double lambda, int n) {
  return project_to_lattice(parse_initial(spec, lambda), n);
}

}  // namespace twolevel
