#include "gslb/parameters.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace gslb::ad {

namespace {

constexpr char kMagic[4] = {'G', 'S', 'L', 'B'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    bool done() const { return pos_ == bytes_.size(); }

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::string get_string(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n)
            throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

Tensor ParameterSet::add(std::string name, Shape shape, Init init) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    auto t = Tensor::zeros(std::move(shape), true);
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), t, init});
    return t;
}

const Tensor& ParameterSet::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    return entries_[it->second].tensor;
}

bool ParameterSet::contains(const std::string& name) const { return index_.count(name) != 0; }

std::size_t ParameterSet::value_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.size();
    return n;
}

void ParameterSet::initialize(Rng& rng) {
    for (auto& e : entries_) {
        auto v = e.tensor.mutable_values();
        switch (e.init) {
            case Init::zeros:
                std::fill(v.begin(), v.end(), 0.0);
                break;
            case Init::ones:
                std::fill(v.begin(), v.end(), 1.0);
                break;
            case Init::normal_embedding:
                for (double& x : v) x = quantize(rng.normal(0.0, 0.02));
                break;
            case Init::uniform_fan_in: {
                const double bound = 1.0 / std::sqrt(static_cast<double>(e.tensor.rows()));
                for (double& x : v) x = quantize(rng.uniform(-bound, bound));
                break;
            }
        }
    }
}

void ParameterSet::zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
}

std::string ParameterSet::serialize(Precision width) const {
    std::string out(kMagic, 4);
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, width == Precision::f32 ? 32u : 64u);
    for (const auto& e : entries_) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
        out += e.name;
        const auto& shape = e.tensor.shape();
        put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
        for (auto d : shape) put<std::uint64_t>(out, d);
        for (double v : e.tensor.values()) {
            if (width == Precision::f32)
                put<float>(out, static_cast<float>(v));
            else
                put<double>(out, v);
        }
    }
    return out;
}

void ParameterSet::deserialize(const std::string& bytes) {
    Reader in(bytes);
    if (in.get_string(4) != std::string(kMagic, 4)) throw CheckpointError("bad checkpoint magic");
    const auto version = in.get<std::uint32_t>();
    if (version != kVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    const auto width = in.get<std::uint32_t>();
    if (width != 32 && width != 64)
        throw CheckpointError("unsupported float width " + std::to_string(width));
    std::size_t seen = 0;
    while (!in.done()) {
        const auto name = in.get_string(in.get<std::uint32_t>());
        const auto rank = in.get<std::uint32_t>();
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(in.get<std::uint64_t>());
        auto it = index_.find(name);
        if (it == index_.end()) throw CheckpointError("checkpoint has unknown tensor " + name);
        auto& t = entries_[it->second].tensor;
        if (t.shape() != shape)
            throw CheckpointError("checkpoint tensor " + name + " has shape mismatch against " +
                                  t.shape_string());
        for (double& v : t.mutable_values())
            v = width == 32 ? static_cast<double>(in.get<float>()) : in.get<double>();
        ++seen;
    }
    if (seen != entries_.size())
        throw CheckpointError("checkpoint holds " + std::to_string(seen) + " of " +
                              std::to_string(entries_.size()) + " tensors");
}

void ParameterSet::save(const std::filesystem::path& path, Precision width) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + path.string());
    const auto bytes = serialize(width);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void ParameterSet::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    deserialize(buf.str());
}

GradCheckReport finite_difference_check(const std::vector<std::pair<std::string, Tensor>>& params,
                                        const std::function<Tensor()>& loss_fn, double tolerance,
                                        double eps) {
    if (precision() != Precision::f64)
        throw std::logic_error("finite_difference_check requires 64-bit mode");
    for (const auto& [name, t] : params) {
        auto copy = t;
        copy.zero_grad();
    }
    backward(loss_fn());

    GradCheckReport report;
    report.tolerance = tolerance;
    NoGradGuard no_grad;
    for (const auto& [name, t] : params) {
        auto tensor = t;
        const std::vector<double> analytic(tensor.grad().begin(), tensor.grad().end());
        auto values = tensor.mutable_values();
        GradCheckEntry entry{name};
        double scale = 0.0;
        std::vector<double> numeric(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + eps;
            const double up = loss_fn().item();
            values[i] = saved - eps;
            const double down = loss_fn().item();
            values[i] = saved;
            numeric[i] = (up - down) / (2.0 * eps);
            scale = std::max({scale, std::abs(numeric[i]), std::abs(analytic[i])});
            entry.max_abs_error = std::max(entry.max_abs_error, std::abs(numeric[i] - analytic[i]));
        }
        entry.max_rel_error = entry.max_abs_error / std::max(scale, 1e-8);
        report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
        report.entries.push_back(entry);
    }
    report.passed = report.max_rel_error <= tolerance;
    return report;
}

GradCheckReport finite_difference_check(const ParameterSet& params,
                                        const std::function<Tensor()>& loss_fn, double tolerance,
                                        double eps) {
    std::vector<std::pair<std::string, Tensor>> list;
    for (const auto& e : params.entries()) list.emplace_back(e.name, e.tensor);
    return finite_difference_check(list, loss_fn, tolerance, eps);
}

}  // namespace gslb::ad
