//! Deterministic multi-agent gridworld for cooperative, order-free
//! multi-object search.
//!
//! Each agent builds its own semantic map, segments and describes rooms,
//! and coordinates with teammates through a request-triggered rotating
//! leadership: whoever asks the current leader for help receives a
//! directive together with the global team state, and becomes the next
//! leader. Decisions are delegated to a pluggable oracle (rule-based by
//! default, or a remote chat-completion endpoint). Motion follows a
//! Voronoi waypoint graph with Dijkstra, and a Fast-Marching travel-time
//! field drives the discrete actions.

pub mod grid;
pub mod harness;
pub mod mapping;
pub mod motion;
pub mod oracle;
pub mod protocol;
pub mod rooms;
pub mod topology;
pub mod world;
