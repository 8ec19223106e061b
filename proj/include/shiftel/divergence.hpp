#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace shiftel {

enum class DivergenceId
{
  KL,
  ReverseKL,
  PearsonChi2,
  SquaredHellinger,
  Custom
};

//! How an unconstrained model output o is mapped to a ratio value r.
enum class Link
{
  Identity, //!< r = o
  Exp       //!< r = exp(o)
};

//! The dual loss pair of a phi-divergence, expressed in the ratio value r.
//!
//! The population criterion E_P l1(r) - E_Q l2(r) is minimised by the true
//! density ratio. Second derivatives are only needed by Newton-type solvers.
struct LossPair
{
  using Fn = std::function<double(double)>;
  Fn ell1;
  Fn ell2;
  Fn ell1_deriv;
  Fn ell2_deriv;
  Fn ell1_deriv2;
  Fn ell2_deriv2;
};

//! Value and derivatives with respect to the model output o (through the link).
struct LinkedLoss
{
  double value = 0.0;
  double deriv = 0.0;
  double deriv2 = 0.0;
};

class DivergenceSpec
{
public:
  //! One of the four catalogued divergences with its default link
  //! (Exp for KL, reverse KL and Hellinger; Identity for Pearson).
  static DivergenceSpec make(DivergenceId id, std::optional<Link> link = std::nullopt);

  //! User-registered loss pair. `offset` is added to the negated objective
  //! to report a divergence that vanishes at P = Q.
  static DivergenceSpec custom(std::string name,
                               LossPair losses,
                               Link link,
                               double domain_min,
                               double offset);

  DivergenceId id() const { return id_; }
  const std::string& name() const { return name_; }
  Link link() const { return link_; }
  const LossPair& loss_pair() const { return losses_; }
  //! Smallest admissible ratio value.
  double domain_min() const { return domain_min_; }
  //! Constant c in D = -L + c.
  double offset() const { return offset_; }

  //! (l1(r), l2(r)); throws DomainError outside the domain.
  std::pair<double, double> losses(double r) const;

  //! l1 and l2 composed with the link, with derivatives in the output o.
  //! Ratio values below the domain are floored (zero derivative there).
  LinkedLoss source_loss(double output) const;
  LinkedLoss target_loss(double output) const;

  double apply_link(double output) const;

private:
  DivergenceSpec() = default;
  LinkedLoss linked(double output, bool source) const;

  DivergenceId id_ = DivergenceId::KL;
  std::string name_;
  Link link_ = Link::Exp;
  LossPair losses_;
  double domain_min_ = 0.0;
  bool domain_inclusive_ = false;
  double offset_ = 0.0;
};

//! "kl" | "reverse-kl" | "pearson" | "hellinger"
DivergenceSpec divergence_from_name(std::string_view name);
std::string divergence_name(DivergenceId id);

//! mean(l1 over source values) - mean(l2 over target values).
double population_objective(const DivergenceSpec& spec,
                            std::span<const double> r_source,
                            std::span<const double> r_target);

//! Divergence implied by a fitted objective value (zero when P = Q).
double divergence_estimate(const DivergenceSpec& spec, double fitted_objective);

} // namespace shiftel
