// Kriging on clustered locations with a stationary taper and with adaptive ranges of the same
// sparsity. Prints the relative mean squared error increase of each over optimal kriging.
#include <iostream>

#include "adaptaper/adaptaper.hpp"

int main() {
  using namespace adaptaper;
  Rng rng = stream(42, 0);
  const PointSet obs = gen_locations(ClusteredLGCP{600}, rng);
  const MaternParams model{1.0, kappa_for_range(0.5, 0.2), 0.5};
  const std::vector<Point> grid = lattice(30);

  SelectionParams params;
  params.seed = 7;
  const RangeSelection sel = adaptive_ranges_for_stationary(obs, 0.1, params);
  const TaperRangeField field(obs, sel.theta);

  KrigingProblem p{obs, grid, model, sample_gp(obs.points(), model, rng), std::nullopt};
  const KrigingResult opt = krige_optimal(p);

  p.taper = make_kriging_taper(Hyperspherical{2}, obs, grid, 0.1);
  const long long stationary_nnz = p.taper->obs.nonzeros();
  const double stationary = relative_mse_increase(opt.mse, krige_tapered(p).mse);

  p.taper = make_kriging_taper(Hyperspherical{2}, field, grid);
  const double adaptive = relative_mse_increase(opt.mse, krige_tapered(p).mse);

  std::cout << "points " << obs.size() << ", non-zeros stationary " << stationary_nnz << " adaptive "
            << total_nonzeros(sel.counts) << '\n'
            << "relative MSE increase: stationary T2 " << stationary << ", adaptive T2 " << adaptive << '\n';
}
