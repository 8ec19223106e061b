#include "shiftel/divergence.hpp"
#include "shiftel/error.hpp"

#include <cmath>
#include <numeric>

namespace shiftel {

namespace {

// ratio floor used while training through an Identity link
constexpr double kTrainingFloor = 1e-6;

LossPair kl_pair()
{
  return { [](double r) { return r; },
           [](double r) { return std::log(r) + 1.0; },
           [](double) { return 1.0; },
           [](double r) { return 1.0 / r; },
           [](double) { return 0.0; },
           [](double r) { return -1.0 / (r * r); } };
}

LossPair reverse_kl_pair()
{
  return { [](double r) { return std::log(r) + 1.0; },
           [](double r) { return -1.0 / r; },
           [](double r) { return 1.0 / r; },
           [](double r) { return 1.0 / (r * r); },
           [](double r) { return -1.0 / (r * r); },
           [](double r) { return -2.0 / (r * r * r); } };
}

LossPair pearson_pair()
{
  return { [](double r) { return r * r - 1.0; },
           [](double r) { return 2.0 * (r - 1.0); },
           [](double r) { return 2.0 * r; },
           [](double) { return 2.0; },
           [](double) { return 2.0; },
           [](double) { return 0.0; } };
}

LossPair hellinger_pair()
{
  return { [](double r) { return std::sqrt(r) - 1.0; },
           [](double r) { return 1.0 - 1.0 / std::sqrt(r); },
           [](double r) { return 0.5 / std::sqrt(r); },
           [](double r) { return 0.5 / (r * std::sqrt(r)); },
           [](double r) { return -0.25 / (r * std::sqrt(r)); },
           [](double r) { return -0.75 / (r * r * std::sqrt(r)); } };
}

} // namespace

DivergenceSpec DivergenceSpec::make(DivergenceId id, std::optional<Link> link)
{
  DivergenceSpec s;
  s.id_ = id;
  s.name_ = divergence_name(id);
  switch (id) {
    case DivergenceId::KL:
      s.losses_ = kl_pair();
      s.link_ = Link::Exp;
      s.domain_min_ = 0.0;
      s.domain_inclusive_ = false;
      s.offset_ = 0.0;
      break;
    case DivergenceId::ReverseKL:
      s.losses_ = reverse_kl_pair();
      s.link_ = Link::Exp;
      s.domain_min_ = 0.0;
      s.domain_inclusive_ = false;
      // l1(1) - l2(1) = 2 at P = Q
      s.offset_ = 2.0;
      break;
    case DivergenceId::PearsonChi2:
      s.losses_ = pearson_pair();
      s.link_ = Link::Identity;
      s.domain_min_ = 0.0;
      s.domain_inclusive_ = true;
      s.offset_ = 0.0;
      break;
    case DivergenceId::SquaredHellinger:
      s.losses_ = hellinger_pair();
      s.link_ = Link::Exp;
      s.domain_min_ = 1e-6;
      s.domain_inclusive_ = true;
      s.offset_ = 0.0;
      break;
    case DivergenceId::Custom:
      throw ConfigError("use DivergenceSpec::custom for user loss pairs");
  }
  if (link)
    s.link_ = *link;
  return s;
}

DivergenceSpec DivergenceSpec::custom(std::string name,
                                      LossPair losses,
                                      Link link,
                                      double domain_min,
                                      double offset)
{
  if (!losses.ell1 || !losses.ell2 || !losses.ell1_deriv || !losses.ell2_deriv)
    throw ConfigError("custom loss pair needs l1, l2 and their derivatives");
  DivergenceSpec s;
  s.id_ = DivergenceId::Custom;
  s.name_ = std::move(name);
  s.losses_ = std::move(losses);
  s.link_ = link;
  s.domain_min_ = domain_min;
  s.domain_inclusive_ = true;
  s.offset_ = offset;
  return s;
}

std::pair<double, double> DivergenceSpec::losses(double r) const
{
  const bool ok = domain_inclusive_ ? r >= domain_min_ : r > domain_min_;
  if (!ok || !std::isfinite(r))
    throw DomainError(name_ + " losses are undefined at r = " + std::to_string(r));
  return { losses_.ell1(r), losses_.ell2(r) };
}

double DivergenceSpec::apply_link(double output) const
{
  return link_ == Link::Exp ? std::exp(output) : output;
}

LinkedLoss DivergenceSpec::linked(double output, bool source) const
{
  const auto& f = source ? losses_.ell1 : losses_.ell2;
  const auto& f1 = source ? losses_.ell1_deriv : losses_.ell2_deriv;
  const auto& f2 = source ? losses_.ell1_deriv2 : losses_.ell2_deriv2;

  double r = apply_link(output);
  if (link_ == Link::Identity) {
    const double floor =
      (id_ == DivergenceId::PearsonChi2) ? -INFINITY : std::max(domain_min_, kTrainingFloor);
    if (r < floor)
      return { f(floor), 0.0, 0.0 };
    const double d2 = f2 ? f2(r) : 0.0;
    return { f(r), f1(r), d2 };
  }
  const double d1 = f1(r);
  const double d2 = f2 ? f2(r) : 0.0;
  return { f(r), d1 * r, d2 * r * r + d1 * r };
}

LinkedLoss DivergenceSpec::source_loss(double output) const
{
  return linked(output, true);
}

LinkedLoss DivergenceSpec::target_loss(double output) const
{
  return linked(output, false);
}

DivergenceSpec divergence_from_name(std::string_view name)
{
  if (name == "kl")
    return DivergenceSpec::make(DivergenceId::KL);
  if (name == "reverse-kl")
    return DivergenceSpec::make(DivergenceId::ReverseKL);
  if (name == "pearson")
    return DivergenceSpec::make(DivergenceId::PearsonChi2);
  if (name == "hellinger")
    return DivergenceSpec::make(DivergenceId::SquaredHellinger);
  throw ConfigError("unknown divergence '" + std::string(name) +
                    "' (expected kl, reverse-kl, pearson or hellinger)");
}

std::string divergence_name(DivergenceId id)
{
  switch (id) {
    case DivergenceId::KL:
      return "kl";
    case DivergenceId::ReverseKL:
      return "reverse-kl";
    case DivergenceId::PearsonChi2:
      return "pearson";
    case DivergenceId::SquaredHellinger:
      return "hellinger";
    case DivergenceId::Custom:
      return "custom";
  }
  return "custom";
}

double population_objective(const DivergenceSpec& spec,
                            std::span<const double> r_source,
                            std::span<const double> r_target)
{
  if (r_source.empty() || r_target.empty())
    throw ConfigError("population_objective needs non-empty samples");
  double s1 = 0.0;
  for (double r : r_source)
    s1 += spec.losses(r).first;
  double s2 = 0.0;
  for (double r : r_target)
    s2 += spec.losses(r).second;
  return s1 / static_cast<double>(r_source.size()) -
         s2 / static_cast<double>(r_target.size());
}

double divergence_estimate(const DivergenceSpec& spec, double fitted_objective)
{
  return -fitted_objective + spec.offset();
}

} // namespace shiftel
