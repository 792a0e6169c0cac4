//! C interface to team formation, the turn-taking metric and headless
//! simulation.
//!
//! Every function returns a [`SotsStatus`]; on failure the message is
//! available from [`sots_last_error`] on the same thread. Handles are opaque
//! and owned by the caller until passed to their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sots::affinity::{
    brute_force_assign, build_affinity_graph, encode_ballot, greedy_assign, AffinityError,
    AffinityGraph, EdgeWeight, PreferenceBallot, TeamAssignment, UserId,
};
use sots::metrics::turn_taking_score;
use sots::session::write_log;
use sots::sim::{run_simulation, SimulationPlan};

/// Largest roster a graph handle accepts.
pub const SOTS_MAX_NODES: usize = 9999;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SotsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    /// Malformed ballots, bad team size or an unknown node.
    Affinity = 4,
    /// The roster is too large for exhaustive search.
    TooLarge = 5,
    Parse = 6,
    Simulation = 7,
    Panic = 8,
}

/// Affinity graph over nodes `0..n`.
pub struct SotsGraph {
    graph: AffinityGraph,
}

/// Team partition; members are node indices of the graph it was built from.
pub struct SotsAssignment {
    teams: Vec<Vec<usize>>,
    score_numer: u64,
    score_denom: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: SotsStatus, msg: impl Into<String>) -> SotsStatus {
    set_error(msg);
    status
}

fn affinity_status(e: AffinityError) -> SotsStatus {
    let status = match e {
        AffinityError::RosterTooLarge { .. } => SotsStatus::TooLarge,
        _ => SotsStatus::Affinity,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> SotsStatus) -> SotsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(SotsStatus::Panic, "internal panic"))
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, SotsStatus> {
    if s.is_null() {
        return Err(fail(SotsStatus::NullPointer, "string argument is null"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(SotsStatus::InvalidUtf8, "string argument is not UTF-8"))
}

fn node_id(i: usize) -> UserId {
    // zero-padded so sorted order equals index order
    UserId::new(format!("{i:04}"))
}

fn into_handle(graph: AffinityGraph, out: *mut *mut SotsGraph) -> SotsStatus {
    // SAFETY: callers check `out` for null first.
    unsafe { *out = Box::into_raw(Box::new(SotsGraph { graph })) };
    SotsStatus::Ok
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn sots_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds a graph from an `n * n` row-major matrix of edge weights in half
/// units (0..=6). Only the upper triangle is read.
///
/// # Safety
/// `halves` must point to `n * n` readable bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sots_graph_from_halves(
    n: usize,
    halves: *const u8,
    out: *mut *mut SotsGraph,
) -> SotsStatus {
    guard(|| {
        if out.is_null() || (halves.is_null() && n > 0) {
            return fail(SotsStatus::NullPointer, "null argument");
        }
        if n > SOTS_MAX_NODES {
            return fail(SotsStatus::InvalidArgument, format!("at most {SOTS_MAX_NODES} nodes"));
        }
        let m = if n == 0 { &[][..] } else { std::slice::from_raw_parts(halves, n * n) };
        let mut bad = None;
        let graph = AffinityGraph::from_fn((0..n).map(node_id), |u, v| {
            let (i, j): (usize, usize) = (u.as_str().parse().unwrap(), v.as_str().parse().unwrap());
            let h = m[i * n + j];
            EdgeWeight::from_halves(h).unwrap_or_else(|| {
                bad = Some((i, j, h));
                EdgeWeight::default()
            })
        });
        if let Some((i, j, h)) = bad {
            return fail(SotsStatus::InvalidArgument, format!("edge ({i},{j}) has {h} halves, max 6"));
        }
        match graph {
            Ok(g) => into_handle(g, out),
            Err(e) => affinity_status(e),
        }
    })
}

/// Builds a graph from a JSON array of ballots
/// (`{"voter", "previous_teammate", "stay_with_previous", "chosen"}`).
/// The roster is the set of voters; node `i` is the i-th voter id in
/// lexicographic order.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sots_graph_from_ballots_json(
    json: *const c_char,
    out: *mut *mut SotsGraph,
) -> SotsStatus {
    guard(|| {
        if out.is_null() {
            return fail(SotsStatus::NullPointer, "out is null");
        }
        let text = match read_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let ballots: Vec<PreferenceBallot> = match serde_json::from_str(text) {
            Ok(b) => b,
            Err(e) => return fail(SotsStatus::Parse, e.to_string()),
        };
        let roster = ballots.iter().map(|b| b.voter.clone()).collect();
        let graph = ballots
            .iter()
            .map(|b| encode_ballot(b, &roster))
            .collect::<Result<Vec<_>, _>>()
            .and_then(|v| build_affinity_graph(&v, &roster));
        match graph {
            Ok(g) => into_handle(g, out),
            Err(e) => affinity_status(e),
        }
    })
}

/// # Safety
/// `graph` must be NULL or a handle from a `sots_graph_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn sots_graph_free(graph: *mut SotsGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// # Safety
/// `graph` must be a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn sots_graph_len(graph: *const SotsGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.graph.len())
}

/// Edge weight between nodes `i` and `j`, in half units.
///
/// # Safety
/// `graph` must be a live graph handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sots_graph_edge_halves(
    graph: *const SotsGraph,
    i: usize,
    j: usize,
    out: *mut u8,
) -> SotsStatus {
    guard(|| {
        let (Some(g), false) = (graph.as_ref(), out.is_null()) else {
            return fail(SotsStatus::NullPointer, "null argument");
        };
        let nodes = g.graph.nodes();
        if i >= nodes.len() || j >= nodes.len() {
            return fail(SotsStatus::InvalidArgument, "node index out of range");
        }
        *out = g.graph.edge(&nodes[i], &nodes[j]).map_or(0, |w| w.halves());
        SotsStatus::Ok
    })
}

fn assignment_handle(
    g: &AffinityGraph,
    result: Result<TeamAssignment, AffinityError>,
    out: *mut *mut SotsAssignment,
) -> SotsStatus {
    let a = match result {
        Ok(a) => a,
        Err(e) => return affinity_status(e),
    };
    let score = match a.total_score(g) {
        Ok(s) => s,
        Err(e) => return affinity_status(e),
    };
    let teams = a
        .teams
        .iter()
        .map(|t| t.iter().filter_map(|id| g.index_of(id)).collect())
        .collect();
    let handle = SotsAssignment {
        teams,
        score_numer: score.numer(),
        score_denom: score.denom(),
    };
    // SAFETY: callers check `out` for null first.
    unsafe { *out = Box::into_raw(Box::new(handle)) };
    SotsStatus::Ok
}

/// Greedy partition into teams of `k` with seeded tie-breaking.
///
/// # Safety
/// `graph` must be a live graph handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sots_greedy_assign(
    graph: *const SotsGraph,
    k: usize,
    seed: u64,
    out: *mut *mut SotsAssignment,
) -> SotsStatus {
    guard(|| {
        let (Some(g), false) = (graph.as_ref(), out.is_null()) else {
            return fail(SotsStatus::NullPointer, "null argument");
        };
        assignment_handle(&g.graph, greedy_assign(&g.graph, k, seed), out)
    })
}

/// Exact optimum by exhaustive search; requires `k` to divide the roster and
/// at most twelve nodes.
///
/// # Safety
/// `graph` must be a live graph handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sots_brute_force_assign(
    graph: *const SotsGraph,
    k: usize,
    out: *mut *mut SotsAssignment,
) -> SotsStatus {
    guard(|| {
        let (Some(g), false) = (graph.as_ref(), out.is_null()) else {
            return fail(SotsStatus::NullPointer, "null argument");
        };
        assignment_handle(&g.graph, brute_force_assign(&g.graph, k), out)
    })
}

/// # Safety
/// `a` must be NULL or a handle from an assign function.
#[no_mangle]
pub unsafe extern "C" fn sots_assignment_free(a: *mut SotsAssignment) {
    if !a.is_null() {
        drop(Box::from_raw(a));
    }
}

/// # Safety
/// `a` must be a live assignment handle.
#[no_mangle]
pub unsafe extern "C" fn sots_assignment_team_count(a: *const SotsAssignment) -> usize {
    a.as_ref().map_or(0, |a| a.teams.len())
}

/// Copies the node indices of team `team` into `members`, which holds
/// `capacity` entries, and stores the team size in `len`.
///
/// # Safety
/// `a` must be a live assignment handle, `len` writable, and `members`
/// writable for `capacity` entries.
#[no_mangle]
pub unsafe extern "C" fn sots_assignment_team(
    a: *const SotsAssignment,
    team: usize,
    members: *mut usize,
    capacity: usize,
    len: *mut usize,
) -> SotsStatus {
    guard(|| {
        let (Some(a), false) = (a.as_ref(), len.is_null()) else {
            return fail(SotsStatus::NullPointer, "null argument");
        };
        let Some(t) = a.teams.get(team) else {
            return fail(SotsStatus::InvalidArgument, "team index out of range");
        };
        *len = t.len();
        if capacity < t.len() || (members.is_null() && !t.is_empty()) {
            return fail(SotsStatus::InvalidArgument, format!("team has {} members", t.len()));
        }
        ptr::copy_nonoverlapping(t.as_ptr(), members, t.len());
        SotsStatus::Ok
    })
}

/// Total score as an exact fraction.
///
/// # Safety
/// `a` must be a live assignment handle and both outputs writable.
#[no_mangle]
pub unsafe extern "C" fn sots_assignment_score(
    a: *const SotsAssignment,
    numer: *mut u64,
    denom: *mut u64,
) -> SotsStatus {
    guard(|| {
        let (Some(a), false, false) = (a.as_ref(), numer.is_null(), denom.is_null()) else {
            return fail(SotsStatus::NullPointer, "null argument");
        };
        *numer = a.score_numer;
        *denom = a.score_denom;
        SotsStatus::Ok
    })
}

/// Turn-taking over a segment author sequence given as integer labels.
/// Writes the raw sum and the normalized score as a reduced fraction.
///
/// # Safety
/// `authors` must point to `len` readable labels; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn sots_turn_taking(
    authors: *const u32,
    len: usize,
    raw_sum: *mut i64,
    numer: *mut i64,
    denom: *mut i64,
) -> SotsStatus {
    guard(|| {
        if (authors.is_null() && len > 0) || raw_sum.is_null() || numer.is_null() || denom.is_null() {
            return fail(SotsStatus::NullPointer, "null argument");
        }
        let seq = if len == 0 { &[][..] } else { std::slice::from_raw_parts(authors, len) };
        match turn_taking_score(seq) {
            Ok(s) => {
                *raw_sum = s.raw_sum;
                *numer = *s.normalized.numer();
                *denom = *s.normalized.denom();
                SotsStatus::Ok
            }
            Err(e) => fail(SotsStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Runs a simulation plan given as TOML and returns its newline-delimited
/// event log. Free the log with [`sots_string_free`].
///
/// # Safety
/// `plan_toml` must be a NUL-terminated string and `log` writable.
#[no_mangle]
pub unsafe extern "C" fn sots_simulate(plan_toml: *const c_char, log: *mut *mut c_char) -> SotsStatus {
    guard(|| {
        if log.is_null() {
            return fail(SotsStatus::NullPointer, "log is null");
        }
        let text = match read_str(plan_toml) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let plan = match SimulationPlan::from_toml(text) {
            Ok(p) => p,
            Err(e) => return fail(SotsStatus::Parse, e.to_string()),
        };
        match run_simulation(&plan) {
            Ok(out) => {
                let s = CString::new(write_log(&out.records)).unwrap_or_default();
                *log = s.into_raw();
                SotsStatus::Ok
            }
            Err(e) => fail(SotsStatus::Simulation, e.to_string()),
        }
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn sots_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
