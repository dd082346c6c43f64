//! Planner: classifies the issue into the dynamic or static route.

use super::provider::Turn;
use super::roles::AgentRole;
use super::search::ContextBundle;
use super::trace::Outcome;
use super::{IssueTask, OrchestratorError, Route, RouteKind, Session};
use regex::Regex;
use std::sync::LazyLock;

static ROUTE_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^\W*route\W*[:=]\W*(dynamic|static)\b").unwrap());
static LABEL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(dynamic|static)\b").unwrap());

pub const RETRY_INSTRUCTION: &str = "Your answer did not name a route. Reply with exactly `route: dynamic` or `route: static`.";

fn kind(label: &str) -> RouteKind {
    if label.eq_ignore_ascii_case("dynamic") {
        RouteKind::Dynamic
    } else {
        RouteKind::Static
    }
}

/// A `route: <label>` line decides; otherwise the reply must name exactly
/// one of the two labels.
pub fn parse_route_label(reply: &str) -> Option<RouteKind> {
    let declared: Vec<RouteKind> = ROUTE_LINE.captures_iter(reply).map(|c| kind(&c[1])).collect();
    if let Some(&first) = declared.first() {
        return declared.iter().all(|k| *k == first).then_some(first);
    }
    let found: Vec<RouteKind> = LABEL.captures_iter(reply).map(|c| kind(&c[1])).collect();
    let first = *found.first()?;
    found.iter().all(|k| *k == first).then_some(first)
}

/// Asks the Planner, retries once on an unparseable answer, and then falls
/// back to the static route.
pub fn plan_route(task: &IssueTask, context: &ContextBundle, session: &mut Session<'_>) -> Result<Route, OrchestratorError> {
    let prompt = format!("{}\n{}", task.text(), context.render());
    let mut history = Vec::new();
    let is_final = |r: &str| parse_route_label(r).is_some();
    for attempt in 0..2 {
        if attempt == 1 {
            history.push(Turn::environment(RETRY_INSTRUCTION));
        }
        match session.converse(AgentRole::Planner, &prompt, &mut history, &is_final) {
            Ok((reply, _)) => {
                if let Some(k) = parse_route_label(&reply) {
                    session.trace.note(AgentRole::Planner, "route", Outcome::Ok, &prompt, &reply, &format!("{k:?}"));
                    return Ok(Route {
                        kind: k,
                        rationale: reply.trim().to_string(),
                    });
                }
            }
            Err(e @ OrchestratorError::BudgetExhausted(_)) => return Err(e),
            Err(OrchestratorError::Provider(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let rationale = "planner gave no parseable route twice; static by default".to_string();
    session.trace.note(AgentRole::Planner, "route", Outcome::Rejected, &prompt, "", &rationale);
    Ok(Route {
        kind: RouteKind::Static,
        rationale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(parse_route_label("dynamic"), Some(RouteKind::Dynamic));
        assert_eq!(parse_route_label("Static.\n"), Some(RouteKind::Static));
        assert_eq!(
            parse_route_label("It is not a static problem.\nroute: dynamic\n"),
            Some(RouteKind::Dynamic)
        );
        assert_eq!(parse_route_label("either dynamic or static"), None);
        assert_eq!(parse_route_label("I am not sure"), None);
        assert_eq!(parse_route_label("dynamically"), None);
        assert_eq!(parse_route_label("route: static\nroute: dynamic"), None);
        assert_eq!(parse_route_label("**Route**: Dynamic"), Some(RouteKind::Dynamic));
    }
}
