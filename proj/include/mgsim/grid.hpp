#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mgsim/common.hpp"

namespace mgsim {

enum class BusType {
    PassThrough = 0,  ///< no load, no microgrid
    Microgrid = 1,    ///< carries a microgrid (load metadata sizes it)
    Market = 3,       ///< single connection to the main grid; slack bus
};

struct Bus {
    int id = 0;  ///< external id as given in the case file
    BusType type = BusType::PassThrough;
    double load_kw = 0.0;    ///< nominal load, used as microgrid sizing metadata
    int microgrid_id = -1;   ///< index into the microgrid set, -1 if none
};

struct Line {
    int from = 0;  ///< bus index (not external id)
    int to = 0;    ///< bus index (not external id)
    double reactance_pu = 0.0;
    double thermal_limit_kw = 0.0;
};

/// A medium-voltage grid case: buses, lines and the single market bus.
/// Immutable after construction; safe to share across threads.
struct GridCase {
    double base_mva = 100.0;
    std::vector<Bus> buses;
    std::vector<Line> lines;
    int market_bus = -1;              ///< bus index of the market/slack bus
    std::vector<int> microgrid_buses; ///< bus index per microgrid, in microgrid order

    int bus_count() const { return static_cast<int>(buses.size()); }
    int line_count() const { return static_cast<int>(lines.size()); }
    int microgrid_count() const { return static_cast<int>(microgrid_buses.size()); }

    /// Sum of nominal loads over all buses (market bus included), in kW.
    double total_load_kw() const;

    /// Bus index for an external bus id; throws if unknown.
    int bus_index(int external_id) const;
};

/// Parse the native case-file format (see data/grids/*.case). Validates that
/// ids are unique, reactances are positive, exactly one market bus exists and
/// the graph is connected.
GridCase parse_case(std::string_view text);

/// Read and parse a case file from disk.
GridCase load_grid_case(const std::string& path);

/// Serialize a GridCase back into the native case-file format.
std::string write_case_file(const GridCase& grid);

/// Parse the bus/branch tables of a Matpower .m case and reduce it to the
/// native model: the type-3 bus becomes the market bus, all other generator
/// buses become plain buses, rateA == 0 maps to `unlimited_rate_kw`, and
/// demand columns are reinterpreted in kW.
GridCase parse_matpower(std::string_view text, double unlimited_rate_kw = 99999.0);

struct DcSolution {
    Eigen::VectorXd flows_kw;  ///< per line, positive in from->to direction
    Eigen::VectorXd angles;    ///< per bus, market bus pinned to 0
};

/// DC power flow with the market bus as angle reference and slack. The
/// reduced susceptance factorization is cached, so keep one solver per grid
/// when solving repeatedly. Solves are const and thread-safe.
class DcSolver {
  public:
    explicit DcSolver(const GridCase& grid);

    /// Per-bus net injections (kW, generation positive) must sum to zero
    /// within `balance_tol_kw`.
    DcSolution solve(const Eigen::VectorXd& injections_kw) const;

    double balance_tol_kw = 1e-6;

  private:
    const GridCase* grid_;
    Eigen::LLT<Eigen::MatrixXd> reduced_llt_;  ///< susceptance matrix without the market row/col
    std::vector<int> reduced_index_;           ///< bus index -> reduced index (-1 for market)
};

/// One-shot convenience wrapper around DcSolver.
DcSolution solve_dc_power_flow(const GridCase& grid, const Eigen::VectorXd& injections_kw);

/// Power transfer distribution factors. Entry (l, i, j) is the change of the
/// flow on line l per unit of power traded from bus i to bus j (injection +1
/// at i, -1 at j). Stored as per-bus injection shift factors referenced to
/// the market bus, so antisymmetry and the zero diagonal are exact.
class PtdfMatrix {
  public:
    PtdfMatrix() = default;
    PtdfMatrix(Eigen::MatrixXd shift_factors, int market_bus)
        : shift_(std::move(shift_factors)), market_bus_(market_bus) {}

    double operator()(int line, int bus_i, int bus_j) const {
        return shift_(line, bus_i) - shift_(line, bus_j);
    }

    /// Flow change on `line` per unit injection at `bus` (slack at market).
    double shift_factor(int line, int bus) const { return shift_(line, bus); }

    const Eigen::MatrixXd& shift_factors() const { return shift_; }
    int line_count() const { return static_cast<int>(shift_.rows()); }
    int bus_count() const { return static_cast<int>(shift_.cols()); }
    int market_bus() const { return market_bus_; }

  private:
    Eigen::MatrixXd shift_;  ///< lines x buses
    int market_bus_ = -1;
};

/// Compute the PTDF matrix for a connected grid.
PtdfMatrix compute_ptdf(const GridCase& grid);

struct LineViolation {
    int line = -1;
    double overload_kw = 0.0;  ///< signed excess beyond the limit
};

/// Thermal limit check: |flow| <= limit + tol. Violations carry the signed
/// excess (flow - limit when positive, flow + limit when negative).
std::vector<LineViolation> check_line_limits(const GridCase& grid,
                                             const Eigen::VectorXd& flows_kw,
                                             double tol_kw = 1e-6);

}  // namespace mgsim
