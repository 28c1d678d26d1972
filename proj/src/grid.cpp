#include "mgsim/grid.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace mgsim {
namespace {

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream iss(line);
    std::string tok;
    while (iss >> tok) out.push_back(tok);
    return out;
}

double to_double(const std::string& tok, const std::string& context) {
    try {
        size_t pos = 0;
        double v = std::stod(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw ParseError("bad number '" + tok + "' in " + context);
    }
}

int to_int(const std::string& tok, const std::string& context) {
    double v = to_double(tok, context);
    int i = static_cast<int>(v);
    if (static_cast<double>(i) != v) throw ParseError("expected integer '" + tok + "' in " + context);
    return i;
}

/// Strip comments ('#' for native files, '%' for Matpower) and whitespace.
std::string strip_line(const std::string& raw, char comment) {
    std::string line = raw;
    auto pos = line.find(comment);
    if (pos != std::string::npos) line.erase(pos);
    while (!line.empty() && (line.back() == '\r' || std::isspace(static_cast<unsigned char>(line.back()))))
        line.pop_back();
    size_t start = 0;
    while (start < line.size() && std::isspace(static_cast<unsigned char>(line[start]))) ++start;
    return line.substr(start);
}

void check_connected(const GridCase& grid) {
    const int n = grid.bus_count();
    std::vector<std::vector<int>> adj(n);
    for (const auto& l : grid.lines) {
        adj[l.from].push_back(l.to);
        adj[l.to].push_back(l.from);
    }
    std::vector<char> seen(n, 0);
    std::vector<int> stack{grid.market_bus};
    seen[grid.market_bus] = 1;
    while (!stack.empty()) {
        int b = stack.back();
        stack.pop_back();
        for (int nb : adj[b])
            if (!seen[nb]) {
                seen[nb] = 1;
                stack.push_back(nb);
            }
    }
    for (int b = 0; b < n; ++b)
        if (!seen[b])
            throw ParseError("grid is disconnected: bus " + std::to_string(grid.buses[b].id) +
                             " is not reachable from the market bus");
}

void finalize(GridCase& grid) {
    if (grid.buses.empty()) throw ParseError("case has no buses");
    int market_count = 0;
    for (int b = 0; b < grid.bus_count(); ++b) {
        if (grid.buses[b].type == BusType::Market) {
            ++market_count;
            grid.market_bus = b;
        }
    }
    if (market_count != 1)
        throw ParseError("case must have exactly one market bus, found " + std::to_string(market_count));

    grid.microgrid_buses.clear();
    for (int b = 0; b < grid.bus_count(); ++b) {
        if (grid.buses[b].type == BusType::Microgrid) {
            grid.buses[b].microgrid_id = static_cast<int>(grid.microgrid_buses.size());
            grid.microgrid_buses.push_back(b);
        } else {
            grid.buses[b].microgrid_id = -1;
        }
    }

    for (const auto& l : grid.lines) {
        if (l.reactance_pu <= 0.0)
            throw ParseError("line reactance must be strictly positive");
        if (l.thermal_limit_kw <= 0.0)
            throw ParseError("line thermal limit must be strictly positive");
        if (l.from == l.to) throw ParseError("self-loop line is not allowed");
    }
    if (grid.line_count() + 1 < grid.bus_count())
        throw ParseError("too few lines for a connected grid");
    check_connected(grid);
}

}  // namespace

double GridCase::total_load_kw() const {
    double sum = 0.0;
    for (const auto& b : buses) sum += b.load_kw;
    return sum;
}

int GridCase::bus_index(int external_id) const {
    for (int b = 0; b < bus_count(); ++b)
        if (buses[b].id == external_id) return b;
    throw Error("unknown bus id " + std::to_string(external_id));
}

GridCase parse_case(std::string_view text) {
    GridCase grid;
    enum class Section { None, Bus, Branch } section = Section::None;
    std::unordered_map<int, int> id_to_index;

    std::istringstream stream{std::string(text)};
    std::string raw;
    int line_no = 0;
    while (std::getline(stream, raw)) {
        ++line_no;
        const std::string line = strip_line(raw, '#');
        if (line.empty()) continue;
        const std::string ctx = "line " + std::to_string(line_no);
        auto toks = split_ws(line);

        if (toks[0] == "baseMVA") {
            if (toks.size() != 2) throw ParseError("baseMVA expects one value (" + ctx + ")");
            grid.base_mva = to_double(toks[1], ctx);
            continue;
        }
        if (toks[0] == "bus") {
            section = Section::Bus;
            continue;
        }
        if (toks[0] == "branch") {
            section = Section::Branch;
            continue;
        }

        if (section == Section::Bus) {
            if (toks.size() != 3) throw ParseError("bus row expects 'id type Pd_kW' (" + ctx + ")");
            Bus bus;
            bus.id = to_int(toks[0], ctx);
            int type = to_int(toks[1], ctx);
            if (type != 0 && type != 1 && type != 3)
                throw ParseError("unknown bus type " + std::to_string(type) + " (" + ctx + ")");
            bus.type = static_cast<BusType>(type);
            bus.load_kw = to_double(toks[2], ctx);
            if (bus.load_kw < 0.0) throw ParseError("negative bus load (" + ctx + ")");
            if (id_to_index.count(bus.id))
                throw ParseError("duplicate bus id " + std::to_string(bus.id) + " (" + ctx + ")");
            id_to_index[bus.id] = grid.bus_count();
            grid.buses.push_back(bus);
        } else if (section == Section::Branch) {
            if (toks.size() != 4) throw ParseError("branch row expects 'from to x_pu rate_kW' (" + ctx + ")");
            Line l;
            int from_id = to_int(toks[0], ctx);
            int to_id = to_int(toks[1], ctx);
            auto it_f = id_to_index.find(from_id);
            auto it_t = id_to_index.find(to_id);
            if (it_f == id_to_index.end() || it_t == id_to_index.end())
                throw ParseError("branch references unknown bus (" + ctx + ")");
            l.from = it_f->second;
            l.to = it_t->second;
            l.reactance_pu = to_double(toks[2], ctx);
            l.thermal_limit_kw = to_double(toks[3], ctx);
            grid.lines.push_back(l);
        } else {
            throw ParseError("row outside of bus/branch section (" + ctx + ")");
        }
    }

    finalize(grid);
    return grid;
}

GridCase load_grid_case(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open case file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_case(buf.str());
}

std::string write_case_file(const GridCase& grid) {
    std::ostringstream out;
    out.precision(12);
    out << "baseMVA " << grid.base_mva << "\n";
    out << "bus\n";
    for (const auto& b : grid.buses)
        out << b.id << " " << static_cast<int>(b.type) << " " << b.load_kw << "\n";
    out << "branch\n";
    for (const auto& l : grid.lines)
        out << grid.buses[l.from].id << " " << grid.buses[l.to].id << " " << l.reactance_pu << " "
            << l.thermal_limit_kw << "\n";
    return out.str();
}

GridCase parse_matpower(std::string_view text, double unlimited_rate_kw) {
    // Minimal table reader for mpc.baseMVA / mpc.bus / mpc.branch assignments.
    GridCase grid;
    std::unordered_map<int, int> id_to_index;

    enum class Section { None, Bus, Branch, Skip } section = Section::None;
    std::istringstream stream{std::string(text)};
    std::string raw;
    int line_no = 0;
    while (std::getline(stream, raw)) {
        ++line_no;
        std::string line = strip_line(raw, '%');
        if (line.empty()) continue;
        const std::string ctx = "line " + std::to_string(line_no);

        if (line.find("mpc.baseMVA") != std::string::npos) {
            auto eq = line.find('=');
            auto sc = line.find(';');
            if (eq == std::string::npos) throw ParseError("malformed baseMVA (" + ctx + ")");
            std::string val = line.substr(eq + 1, sc == std::string::npos ? std::string::npos : sc - eq - 1);
            grid.base_mva = to_double(split_ws(val).at(0), ctx);
            continue;
        }
        if (line.find('=') != std::string::npos && line.find('[') != std::string::npos) {
            if (line.find("mpc.bus") != std::string::npos && line.find("bus_name") == std::string::npos)
                section = Section::Bus;
            else if (line.find("mpc.branch") != std::string::npos)
                section = Section::Branch;
            else
                section = Section::Skip;
            continue;
        }
        if (line.find("];") != std::string::npos || line == "]") {
            section = Section::None;
            continue;
        }
        if (section == Section::None || section == Section::Skip) continue;

        // Matrix row; trailing ';' optional.
        std::replace(line.begin(), line.end(), ';', ' ');
        std::replace(line.begin(), line.end(), ',', ' ');
        auto toks = split_ws(line);
        if (toks.empty()) continue;

        if (section == Section::Bus) {
            // columns: bus_i  type  Pd  Qd  ...
            if (toks.size() < 3) throw ParseError("short matpower bus row (" + ctx + ")");
            Bus bus;
            bus.id = to_int(toks[0], ctx);
            int mtype = to_int(toks[1], ctx);
            double pd = to_double(toks[2], ctx);
            bus.load_kw = pd;  // MW in the source tables, reinterpreted as kW
            if (mtype == 3)
                bus.type = BusType::Market;
            else
                bus.type = pd > 0.0 ? BusType::Microgrid : BusType::PassThrough;
            if (id_to_index.count(bus.id))
                throw ParseError("duplicate matpower bus id (" + ctx + ")");
            id_to_index[bus.id] = grid.bus_count();
            grid.buses.push_back(bus);
        } else {
            // columns: fbus  tbus  r  x  b  rateA ...
            if (toks.size() < 6) throw ParseError("short matpower branch row (" + ctx + ")");
            Line l;
            int from_id = to_int(toks[0], ctx);
            int to_id = to_int(toks[1], ctx);
            auto it_f = id_to_index.find(from_id);
            auto it_t = id_to_index.find(to_id);
            if (it_f == id_to_index.end() || it_t == id_to_index.end())
                throw ParseError("matpower branch references unknown bus (" + ctx + ")");
            l.from = it_f->second;
            l.to = it_t->second;
            l.reactance_pu = to_double(toks[3], ctx);
            double rate = to_double(toks[5], ctx);
            l.thermal_limit_kw = rate > 0.0 ? rate : unlimited_rate_kw;
            grid.lines.push_back(l);
        }
    }

    finalize(grid);
    return grid;
}

DcSolver::DcSolver(const GridCase& grid) : grid_(&grid) {
    const int n = grid.bus_count();
    reduced_index_.assign(n, -1);
    int k = 0;
    for (int b = 0; b < n; ++b)
        if (b != grid.market_bus) reduced_index_[b] = k++;

    Eigen::MatrixXd b_red = Eigen::MatrixXd::Zero(n - 1, n - 1);
    for (const auto& l : grid.lines) {
        const double y = 1.0 / l.reactance_pu;
        const int fi = reduced_index_[l.from];
        const int ti = reduced_index_[l.to];
        if (fi >= 0) b_red(fi, fi) += y;
        if (ti >= 0) b_red(ti, ti) += y;
        if (fi >= 0 && ti >= 0) {
            b_red(fi, ti) -= y;
            b_red(ti, fi) -= y;
        }
    }
    reduced_llt_.compute(b_red);
    if (reduced_llt_.info() != Eigen::Success)
        throw Error("singular susceptance system: grid must be connected");
}

DcSolution DcSolver::solve(const Eigen::VectorXd& injections_kw) const {
    const int n = grid_->bus_count();
    if (injections_kw.size() != n)
        throw Error("injection vector size mismatch");
    const double imbalance = injections_kw.sum();
    if (std::abs(imbalance) > balance_tol_kw)
        throw Error("injections do not balance: residual " + std::to_string(imbalance) + " kW");

    Eigen::VectorXd p_red(n - 1);
    for (int b = 0; b < n; ++b)
        if (reduced_index_[b] >= 0) p_red(reduced_index_[b]) = injections_kw(b);

    const Eigen::VectorXd theta_red = reduced_llt_.solve(p_red);

    DcSolution sol;
    sol.angles = Eigen::VectorXd::Zero(n);
    for (int b = 0; b < n; ++b)
        if (reduced_index_[b] >= 0) sol.angles(b) = theta_red(reduced_index_[b]);

    sol.flows_kw.resize(grid_->line_count());
    for (int l = 0; l < grid_->line_count(); ++l) {
        const auto& line = grid_->lines[l];
        sol.flows_kw(l) = (sol.angles(line.from) - sol.angles(line.to)) / line.reactance_pu;
    }
    return sol;
}

DcSolution solve_dc_power_flow(const GridCase& grid, const Eigen::VectorXd& injections_kw) {
    return DcSolver(grid).solve(injections_kw);
}

PtdfMatrix compute_ptdf(const GridCase& grid) {
    const int n = grid.bus_count();
    const int m = grid.line_count();
    DcSolver solver(grid);

    // Columns of the shift-factor matrix are DC solves for a unit injection
    // at one bus balanced at the market bus.
    Eigen::MatrixXd shift = Eigen::MatrixXd::Zero(m, n);
    Eigen::VectorXd inj = Eigen::VectorXd::Zero(n);
    for (int b = 0; b < n; ++b) {
        if (b == grid.market_bus) continue;
        inj.setZero();
        inj(b) = 1.0;
        inj(grid.market_bus) = -1.0;
        shift.col(b) = solver.solve(inj).flows_kw;
    }
    return PtdfMatrix(std::move(shift), grid.market_bus);
}

std::vector<LineViolation> check_line_limits(const GridCase& grid, const Eigen::VectorXd& flows_kw,
                                             double tol_kw) {
    if (flows_kw.size() != grid.line_count())
        throw Error("flow vector size mismatch");
    std::vector<LineViolation> violations;
    for (int l = 0; l < grid.line_count(); ++l) {
        const double limit = grid.lines[l].thermal_limit_kw;
        const double f = flows_kw(l);
        if (f > limit + tol_kw)
            violations.push_back({l, f - limit});
        else if (f < -limit - tol_kw)
            violations.push_back({l, f + limit});
    }
    return violations;
}

}  // namespace mgsim
