//! Room descriptions: a rule describer over a bundled co-occurrence table,
//! and an HTTP describer that falls back to it.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mapping::SemanticMap;

use super::{FrameRecord, RoomSegment};

pub const UNKNOWN_ROOM: &str = "unknown room";

const BUNDLED_TABLE: &str = include_str!("../../data/cooccurrence.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomDescription {
    pub room_id: super::RoomId,
    pub label: String,
    pub object_list: Vec<String>,
    pub text: String,
    pub likely_targets: Vec<String>,
    #[serde(default)]
    pub degraded: bool,
}

#[derive(Debug, Error)]
pub enum DescribeError {
    #[error("describer transport: {0}")]
    Transport(String),
    #[error("describer reply invalid: {0}")]
    Invalid(String),
    #[error("co-occurrence table: {0}")]
    Table(String),
}

/// Request document for describers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescribeRequest {
    pub room_id: super::RoomId,
    pub cells: usize,
    pub door_cells: usize,
    pub explored: f64,
    pub objects: Vec<String>,
    pub targets: Vec<String>,
}

/// Response document from a remote describer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescribeReply {
    pub label: String,
    pub text: String,
    pub likely_targets: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableDoc {
    version: u32,
    unknown_room_prior: f64,
    kinds: BTreeMap<String, BTreeMap<String, f64>>,
}

/// Room-kind by object-class weights, plus a flat prior for unlabelled rooms.
#[derive(Clone, Debug, PartialEq)]
pub struct CooccurrenceTable {
    pub version: u32,
    unknown_prior: f64,
    kinds: BTreeMap<String, BTreeMap<String, f64>>,
}

impl CooccurrenceTable {
    pub fn parse(text: &str) -> Result<Self, DescribeError> {
        let doc: TableDoc = toml::from_str(text).map_err(|e| DescribeError::Table(e.to_string()))?;
        for (kind, row) in &doc.kinds {
            if let Some((class, w)) = row.iter().find(|(_, w)| !(0.0..=1.0).contains(*w)) {
                return Err(DescribeError::Table(format!("{kind}/{class} weight {w} outside [0,1]")));
            }
        }
        Ok(Self {
            version: doc.version,
            unknown_prior: doc.unknown_room_prior,
            kinds: doc.kinds,
        })
    }

    /// The table shipped with the crate.
    pub fn bundled() -> &'static CooccurrenceTable {
        static TABLE: OnceLock<CooccurrenceTable> = OnceLock::new();
        TABLE.get_or_init(|| Self::parse(BUNDLED_TABLE).expect("bundled table parses"))
    }

    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.kinds.keys().map(String::as_str)
    }

    /// All object classes that appear in some row.
    pub fn classes(&self) -> BTreeSet<&str> {
        self.kinds
            .values()
            .flat_map(|row| row.keys().map(String::as_str))
            .collect()
    }

    /// Weight of `class` in a room labelled `label`; unlisted pairs are 0 and
    /// the unknown label uses the flat prior.
    pub fn weight(&self, label: &str, class: &str) -> f64 {
        if label == UNKNOWN_ROOM {
            return self.unknown_prior;
        }
        self.kinds
            .get(label)
            .and_then(|row| row.get(class))
            .copied()
            .unwrap_or(0.0)
    }

    /// Kind with the largest summed weight over `objects`; ties go to the
    /// alphabetically first kind. No evidence gives the unknown label.
    pub fn label_for<'a>(&self, objects: impl IntoIterator<Item = &'a str> + Clone) -> String {
        let mut best: Option<(&str, f64)> = None;
        for (kind, row) in &self.kinds {
            let score: f64 = objects.clone().into_iter().map(|o| row.get(o).copied().unwrap_or(0.0)).sum();
            if score > 0.0 && best.is_none_or(|(_, b)| score > b) {
                best = Some((kind, score));
            }
        }
        best.map_or_else(|| UNKNOWN_ROOM.to_string(), |(k, _)| k.to_string())
    }
}

pub trait RoomDescriber {
    fn describe(&self, req: &DescribeRequest) -> Result<RoomDescription, DescribeError>;
}

/// Table lookup: label by strongest co-occurrence, likely targets are the
/// ones the label makes plausible.
#[derive(Clone, Debug)]
pub struct RuleDescriber {
    table: CooccurrenceTable,
}

impl Default for RuleDescriber {
    fn default() -> Self {
        Self {
            table: CooccurrenceTable::bundled().clone(),
        }
    }
}

impl RuleDescriber {
    pub fn new(table: CooccurrenceTable) -> Self {
        Self { table }
    }

    pub fn table(&self) -> &CooccurrenceTable {
        &self.table
    }
}

impl RoomDescriber for RuleDescriber {
    fn describe(&self, req: &DescribeRequest) -> Result<RoomDescription, DescribeError> {
        let label = self.table.label_for(req.objects.iter().map(String::as_str));
        let likely_targets: Vec<String> = req
            .targets
            .iter()
            .filter(|t| self.table.weight(&label, t) > 0.0)
            .cloned()
            .collect();
        let text = if req.objects.is_empty() {
            format!("An {label} of {} cells with no notable objects.", req.cells)
        } else {
            let article = if label.starts_with(['a', 'e', 'i', 'o', 'u']) { "An" } else { "A" };
            format!(
                "{article} {label} of {} cells containing {}.",
                req.cells,
                req.objects.join(", ")
            )
        };
        Ok(RoomDescription {
            room_id: req.room_id,
            label,
            object_list: req.objects.clone(),
            text,
            likely_targets,
            degraded: false,
        })
    }
}

/// Posts the request document as JSON and expects a [`DescribeReply`].
/// Any failure falls back to the rule describer with `degraded` set.
#[derive(Debug)]
pub struct RemoteDescriber {
    endpoint: String,
    agent: ureq::Agent,
    fallback: RuleDescriber,
}

impl RemoteDescriber {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            agent,
            fallback: RuleDescriber::default(),
        }
    }

    fn call(&self, req: &DescribeRequest) -> Result<RoomDescription, DescribeError> {
        let reply: DescribeReply = self
            .agent
            .post(&self.endpoint)
            .send_json(req)
            .map_err(|e| DescribeError::Transport(e.to_string()))?
            .into_body()
            .read_json()
            .map_err(|e| DescribeError::Invalid(e.to_string()))?;
        if reply.label.trim().is_empty() {
            return Err(DescribeError::Invalid("empty label".into()));
        }
        if let Some(t) = reply.likely_targets.iter().find(|t| !req.targets.contains(t)) {
            return Err(DescribeError::Invalid(format!("likely target {t:?} not a remaining target")));
        }
        Ok(RoomDescription {
            room_id: req.room_id,
            label: reply.label,
            object_list: req.objects.clone(),
            text: reply.text,
            likely_targets: reply.likely_targets,
            degraded: false,
        })
    }
}

impl RoomDescriber for RemoteDescriber {
    fn describe(&self, req: &DescribeRequest) -> Result<RoomDescription, DescribeError> {
        match self.call(req) {
            Ok(d) => Ok(d),
            Err(_) => {
                let mut d = self.fallback.describe(req)?;
                d.degraded = true;
                Ok(d)
            }
        }
    }
}

/// Describes `room` from its best frame and the agent's map: the object
/// list is every class seen on the room's cells, sorted.
pub fn describe(
    room: &RoomSegment,
    frame: &FrameRecord,
    map: &SemanticMap,
    targets: &[String],
    describer: &dyn RoomDescriber,
) -> Result<RoomDescription, DescribeError> {
    let mut objects: BTreeSet<String> = frame
        .visible_objects
        .iter()
        .filter(|(_, p)| room.mask.contains(p))
        .map(|(c, _)| c.clone())
        .collect();
    objects.extend(map.classes_in(&room.mask));
    let req = DescribeRequest {
        room_id: room.room_id,
        cells: room.mask.len(),
        door_cells: room.door_cells.len(),
        explored: room.explored,
        objects: objects.into_iter().collect(),
        targets: targets.to_vec(),
    };
    describer.describe(&req)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rooms::RoomId;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    fn req(objects: &[&str], targets: &[&str]) -> DescribeRequest {
        DescribeRequest {
            room_id: RoomId(1),
            cells: 20,
            door_cells: 1,
            explored: 1.0,
            objects: objects.iter().map(|s| s.to_string()).collect(),
            targets: targets.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn bed_and_pillow_make_a_bedroom() {
        let d = RuleDescriber::default().describe(&req(&["bed", "pillow"], &["toilet", "tv"])).unwrap();
        assert_eq!(d.label, "bedroom");
        assert_eq!(d.likely_targets, vec!["tv".to_string()]);
    }

    #[test]
    fn no_objects_means_unknown_room() {
        let d = RuleDescriber::default().describe(&req(&[], &["toilet", "tv"])).unwrap();
        assert_eq!(d.label, UNKNOWN_ROOM);
        assert_eq!(d.likely_targets, vec!["toilet".to_string(), "tv".to_string()]);
    }

    #[test]
    fn toilet_makes_a_bathroom_without_tv() {
        let table = CooccurrenceTable::bundled();
        let d = RuleDescriber::default().describe(&req(&["toilet"], &["toilet", "tv"])).unwrap();
        assert_eq!(d.label, "bathroom");
        assert!(!d.likely_targets.contains(&"tv".to_string()));
        assert_eq!(table.weight("bathroom", "tv"), 0.0);
    }

    #[test]
    fn bundled_table_shape() {
        let t = CooccurrenceTable::bundled();
        assert!(t.classes().len() >= 30);
        assert!(t.kinds().count() >= 6);
    }

    #[test]
    fn rule_describer_is_pure() {
        let r = req(&["sofa", "tv"], &["cup", "tv"]);
        let d = RuleDescriber::default();
        assert_eq!(d.describe(&r).unwrap(), d.describe(&r).unwrap());
    }

    /// Serves one HTTP response per accepted connection.
    fn serve(bodies: Vec<(u16, String)>) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            for (status, body) in bodies {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                let reply = format!(
                    "HTTP/1.1 {status} OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });
        format!("http://{addr}/describe")
    }

    #[test]
    fn remote_describer_uses_reply() {
        let url = serve(vec![(
            200,
            r#"{"label":"den","text":"A cosy den.","likely_targets":["tv"]}"#.into(),
        )]);
        let d = RemoteDescriber::new(url, Duration::from_secs(5))
            .describe(&req(&["sofa"], &["tv", "toilet"]))
            .unwrap();
        assert_eq!(d.label, "den");
        assert!(!d.degraded);
        assert_eq!(d.object_list, vec!["sofa".to_string()]);
    }

    #[test]
    fn remote_describer_falls_back() {
        let url = serve(vec![(500, "{}".into())]);
        let r = req(&["toilet"], &["tv", "toilet"]);
        let d = RemoteDescriber::new(url, Duration::from_secs(5)).describe(&r).unwrap();
        assert!(d.degraded);
        let mut rule = RuleDescriber::default().describe(&r).unwrap();
        rule.degraded = true;
        assert_eq!(d, rule);

        // Nothing listening at all.
        let dead = RemoteDescriber::new("http://127.0.0.1:9/x", Duration::from_millis(300));
        assert!(dead.describe(&r).unwrap().degraded);
    }

    #[test]
    fn remote_reply_with_foreign_target_is_rejected() {
        let url = serve(vec![(
            200,
            r#"{"label":"den","text":"x","likely_targets":["piano"]}"#.into(),
        )]);
        let d = RemoteDescriber::new(url, Duration::from_secs(5))
            .describe(&req(&[], &["tv"]))
            .unwrap();
        assert!(d.degraded);
        assert_eq!(d.label, UNKNOWN_ROOM);
    }
}
