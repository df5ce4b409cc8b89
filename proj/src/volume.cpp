#include "tppt/volume.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tppt/error.hpp"

namespace tppt {

namespace {

constexpr double kDenomEps = 1e-12;

} // namespace

EdgeProbability edge_probability(const Tensor& Y, const RoadNetwork& net) {
    if (Y.rank() != 3) throw validation_error("edge_probability: Y must be (B, T, V+1)");
    const int B = static_cast<int>(Y.dim(0));
    const int T = static_cast<int>(Y.dim(1));
    const int W = static_cast<int>(Y.dim(2)); // V+1 classes
    if (W != net.node_count() + 1) {
        throw validation_error("edge_probability: Y class count does not match network");
    }
    const int E = net.edge_count();

    EdgeProbability dotY;
    dotY.B = B;
    dotY.T = T;
    dotY.E = E;
    dotY.v.assign(static_cast<std::size_t>(B) * T * E, 0.0);

    const double* py = Y.data();
    for (int b = 0; b < B; ++b) {
        for (int t = 0; t < T; ++t) {
            const double* row = py + (static_cast<std::size_t>(b) * T + t) * W;
            const double* next = (t + 1 < T) ? row + W : nullptr;
            double* out = dotY.v.data() + (static_cast<std::size_t>(b) * T + t) * E;
            for (int i = 0; i < E; ++i) {
                const Edge& e = net.edge(i);
                const double po = row[e.origin];
                if (po == 0.0) continue;
                if (next != nullptr) {
                    out[i] = po * next[e.destination] + po * next[e.origin];
                } else {
                    out[i] = po * po; // dwell-only boundary at the last step
                }
            }
        }
    }
    return dotY;
}

VolumeTensor volume(const EdgeProbability& dotY, bool exclude_offnetwork, const Tensor* Y) {
    if (exclude_offnetwork && Y == nullptr) {
        throw validation_error("volume: exclude_offnetwork requires the trajectory probabilities");
    }
    VolumeTensor vol;
    vol.E = dotY.E;
    vol.T = dotY.T;
    vol.v.assign(static_cast<std::size_t>(dotY.E) * dotY.T, 0.0);

    for (int b = 0; b < dotY.B; ++b) {
        for (int t = 0; t < dotY.T; ++t) {
            const double* row = dotY.v.data() + (static_cast<std::size_t>(b) * dotY.T + t) * dotY.E;
            double denom = 0.0;
            for (int i = 0; i < dotY.E; ++i) denom += row[i];
            if (denom < kDenomEps) continue; // treated as off-network at this step
            double unit = 1.0;
            if (exclude_offnetwork) {
                const int W = static_cast<int>(Y->dim(2));
                const double* yrow = Y->data() + (static_cast<std::size_t>(b) * dotY.T + t) * W;
                double on = 0.0;
                for (int v = 1; v < W; ++v) on += yrow[v];
                unit = on;
            }
            const double inv = unit / denom;
            for (int i = 0; i < dotY.E; ++i) {
                if (row[i] != 0.0) vol.at(i, t) += row[i] * inv;
            }
        }
    }
    return vol;
}

VolumeTensor volume_oracle(const std::vector<Trajectory>& trajectories, const RoadNetwork& net) {
    VolumeTensor vol;
    vol.E = net.edge_count();
    vol.T = trajectories.empty() ? 0 : static_cast<int>(trajectories.front().size());
    vol.v.assign(static_cast<std::size_t>(vol.E) * vol.T, 0.0);

    for (const Trajectory& traj : trajectories) {
        if (static_cast<int>(traj.size()) != vol.T) {
            throw validation_error("volume_oracle: inconsistent trajectory lengths");
        }
        for (int t = 0; t < vol.T; ++t) {
            const std::int32_t u = traj[static_cast<std::size_t>(t)];
            if (u == 0) continue;
            // next distinct token identifies the edge being traversed
            std::int32_t v = 0;
            for (int s = t + 1; s < vol.T; ++s) {
                if (traj[static_cast<std::size_t>(s)] != u) {
                    v = traj[static_cast<std::size_t>(s)];
                    break;
                }
            }
            if (v == 0) continue; // arrived or truncated
            const auto ei = net.find_edge(u, v);
            if (!ei) {
                throw validation_error("volume_oracle: trajectory uses missing edge (" +
                                       std::to_string(u) + "," + std::to_string(v) + ")");
            }
            vol.at(*ei, t) += 1.0;
        }
    }
    return vol;
}

double mae(const VolumeTensor& pred, const VolumeTensor& truth) {
    if (pred.E != truth.E || pred.T != truth.T) {
        throw validation_error("mae: tensor shapes differ (" + std::to_string(pred.E) + "x" +
                               std::to_string(pred.T) + " vs " + std::to_string(truth.E) + "x" +
                               std::to_string(truth.T) + ")");
    }
    if (pred.v.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.v.size(); ++i) acc += std::abs(pred.v[i] - truth.v[i]);
    return acc / static_cast<double>(pred.v.size());
}

void write_volume_csv(const VolumeTensor& vol, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw runtime_error("cannot write volume csv: " + path);
    char buf[32];
    for (int i = 0; i < vol.E; ++i) {
        for (int t = 0; t < vol.T; ++t) {
            std::snprintf(buf, sizeof(buf), "%.6f", vol.at(i, t));
            out << (t ? "," : "") << buf;
        }
        out << "\n";
    }
}

VolumeTensor read_volume_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open volume csv: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw parse_error(path + ":" + std::to_string(line_no) + ": bad cell '" + cell + "'");
            }
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw parse_error(path + ":" + std::to_string(line_no) + ": ragged row");
        }
        rows.push_back(std::move(row));
    }
    VolumeTensor vol;
    vol.E = static_cast<int>(rows.size());
    vol.T = rows.empty() ? 0 : static_cast<int>(rows.front().size());
    vol.v.reserve(static_cast<std::size_t>(vol.E) * vol.T);
    for (const auto& row : rows) vol.v.insert(vol.v.end(), row.begin(), row.end());
    return vol;
}

ExportPaths export_volumes(const VolumeTensor& vol, const RoadNetwork& net,
                           const std::vector<std::pair<double, double>>* coordinates,
                           const std::string& out_dir) {
    if (vol.E != net.edge_count()) {
        throw validation_error("export_volumes: volume rows do not match edge count");
    }
    std::filesystem::create_directories(out_dir);
    ExportPaths paths;
    paths.volume_csv = out_dir + "/vol.csv";
    write_volume_csv(vol, paths.volume_csv);

    paths.totals_csv = out_dir + "/totals.csv";
    {
        std::ofstream out(paths.totals_csv);
        if (!out) throw runtime_error("cannot write totals csv: " + paths.totals_csv);
        out << "t,total\n";
        char buf[32];
        for (int t = 0; t < vol.T; ++t) {
            double total = 0.0;
            for (int i = 0; i < vol.E; ++i) total += vol.at(i, t);
            std::snprintf(buf, sizeof(buf), "%.6f", total);
            out << (t + 1) << "," << buf << "\n";
        }
    }

    if (coordinates == nullptr) {
        std::cerr << "warning: no node coordinates, skipping GeoJSON export\n";
        return paths;
    }

    nlohmann::json doc;
    doc["type"] = "FeatureCollection";
    nlohmann::json features = nlohmann::json::array();
    for (int i = 0; i < vol.E; ++i) {
        const Edge& e = net.edge(i);
        const auto& [xo, yo] = (*coordinates)[static_cast<std::size_t>(e.origin)];
        const auto& [xd, yd] = (*coordinates)[static_cast<std::size_t>(e.destination)];
        nlohmann::json feature;
        feature["type"] = "Feature";
        feature["geometry"] = {{"type", "LineString"},
                               {"coordinates", {{xo, yo}, {xd, yd}}}};
        nlohmann::json series = nlohmann::json::array();
        for (int t = 0; t < vol.T; ++t) series.push_back(vol.at(i, t));
        feature["properties"] = {{"edge", i}, {"origin", e.origin}, {"destination", e.destination},
                                 {"volume", series}};
        features.push_back(std::move(feature));
    }
    doc["features"] = std::move(features);

    paths.geojson = out_dir + "/volumes.geojson";
    std::ofstream out(paths.geojson);
    if (!out) throw runtime_error("cannot write geojson: " + paths.geojson);
    out << doc.dump(2) << "\n";
    return paths;
}

} // namespace tppt
