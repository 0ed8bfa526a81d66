//! OpenStreetMap XML extracts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use quick_xml::events::{BytesStart, Event};
use quick_xml::{Reader, XmlVersion};
use thiserror::Error;

pub type Tags = BTreeMap<String, String>;

#[derive(Debug, Error, PartialEq)]
pub enum OsmError {
    #[error("malformed OSM XML at byte {position}: {message}")]
    Xml { position: u64, message: String },
    #[error("way {way_id} references missing node {node_id}")]
    DanglingNode { way_id: i64, node_id: i64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OsmNode {
    pub lat: f64,
    pub lon: f64,
    pub tags: Tags,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OsmWay {
    pub node_ids: Vec<i64>,
    pub tags: Tags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemberKind {
    Node,
    Way,
    Relation,
}

impl MemberKind {
    fn as_str(self) -> &'static str {
        match self {
            MemberKind::Node => "node",
            MemberKind::Way => "way",
            MemberKind::Relation => "relation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationMember {
    pub kind: MemberKind,
    pub ref_id: i64,
    pub role: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OsmRelation {
    pub members: Vec<RelationMember>,
    pub tags: Tags,
}

/// A fully resolved extract: every way's node references exist.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OsmExtract {
    pub nodes: BTreeMap<i64, OsmNode>,
    pub ways: BTreeMap<i64, OsmWay>,
    pub relations: BTreeMap<i64, OsmRelation>,
}

impl OsmExtract {
    /// Node coordinates of a way as `(lon, lat)` pairs.
    pub fn way_coords(&self, way: &OsmWay) -> Vec<(f64, f64)> {
        way.node_ids
            .iter()
            .map(|id| {
                let n = &self.nodes[id];
                (n.lon, n.lat)
            })
            .collect()
    }
}

enum Open {
    Node(i64, OsmNode),
    Way(i64, OsmWay),
    Relation(i64, OsmRelation),
}

struct Ctx<'r> {
    reader: &'r Reader<&'r [u8]>,
}

impl Ctx<'_> {
    fn err(&self, message: impl Into<String>) -> OsmError {
        OsmError::Xml {
            position: self.reader.buffer_position(),
            message: message.into(),
        }
    }

    fn attrs(&self, e: &BytesStart<'_>) -> Result<BTreeMap<String, String>, OsmError> {
        let mut out = BTreeMap::new();
        for a in e.attributes() {
            let a = a.map_err(|err| self.err(err.to_string()))?;
            let key = a.key.0.to_string();
            let value = a
                .normalized_value(XmlVersion::Implicit1_0)
                .map_err(|err| self.err(err.to_string()))?;
            out.insert(key, value.into_owned());
        }
        Ok(out)
    }

    fn req<T: std::str::FromStr>(
        &self,
        attrs: &BTreeMap<String, String>,
        key: &str,
        element: &str,
    ) -> Result<T, OsmError> {
        let raw = attrs
            .get(key)
            .ok_or_else(|| self.err(format!("<{element}> missing `{key}`")))?;
        raw.parse()
            .map_err(|_| self.err(format!("<{element}> has invalid `{key}` = `{raw}`")))
    }
}

/// Parses an OSM XML document. Elements other than node, way, relation and
/// their tag/nd/member children are ignored.
pub fn parse_osm_xml(bytes: &[u8]) -> Result<OsmExtract, OsmError> {
    let mut reader = Reader::from_reader(bytes);
    reader.config_mut().trim_text(true);
    let mut extract = OsmExtract::default();
    let mut open: Option<Open> = None;

    loop {
        let event = reader.read_event().map_err(|e| OsmError::Xml {
            position: reader.error_position(),
            message: e.to_string(),
        })?;
        let ctx = Ctx { reader: &reader };
        let (e, empty) = match &event {
            Event::Start(e) => (e, false),
            Event::Empty(e) => (e, true),
            Event::End(e) => {
                if matches!(e.name().0, "node" | "way" | "relation") {
                    close(&mut extract, open.take());
                }
                continue;
            }
            Event::Eof => break,
            _ => continue,
        };
        match e.name().0 {
            "node" => {
                let a = ctx.attrs(e)?;
                let id = ctx.req(&a, "id", "node")?;
                let lat: f64 = ctx.req(&a, "lat", "node")?;
                let lon: f64 = ctx.req(&a, "lon", "node")?;
                if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
                    return Err(ctx.err(format!("node {id} has out-of-range coordinates")));
                }
                open = Some(Open::Node(id, OsmNode { lat, lon, tags: Tags::new() }));
            }
            "way" => {
                let a = ctx.attrs(e)?;
                let id = ctx.req(&a, "id", "way")?;
                open = Some(Open::Way(id, OsmWay { node_ids: Vec::new(), tags: Tags::new() }));
            }
            "relation" => {
                let a = ctx.attrs(e)?;
                let id = ctx.req(&a, "id", "relation")?;
                open = Some(Open::Relation(
                    id,
                    OsmRelation { members: Vec::new(), tags: Tags::new() },
                ));
            }
            "tag" => {
                let a = ctx.attrs(e)?;
                let k: String = ctx.req(&a, "k", "tag")?;
                let v: String = ctx.req(&a, "v", "tag")?;
                match &mut open {
                    Some(Open::Node(_, n)) => n.tags.insert(k, v),
                    Some(Open::Way(_, w)) => w.tags.insert(k, v),
                    Some(Open::Relation(_, r)) => r.tags.insert(k, v),
                    None => None,
                };
            }
            "nd" => {
                let a = ctx.attrs(e)?;
                let r = ctx.req(&a, "ref", "nd")?;
                if let Some(Open::Way(_, w)) = &mut open {
                    w.node_ids.push(r);
                }
            }
            "member" => {
                let a = ctx.attrs(e)?;
                let kind = match a.get("type").map(String::as_str) {
                    Some("node") => MemberKind::Node,
                    Some("way") => MemberKind::Way,
                    Some("relation") => MemberKind::Relation,
                    other => return Err(ctx.err(format!("<member> has invalid type {other:?}"))),
                };
                let ref_id = ctx.req(&a, "ref", "member")?;
                let role = a.get("role").cloned().unwrap_or_default();
                if let Some(Open::Relation(_, r)) = &mut open {
                    r.members.push(RelationMember { kind, ref_id, role });
                }
            }
            _ => continue,
        }
        if empty && matches!(e.name().0, "node" | "way" | "relation") {
            close(&mut extract, open.take());
        }
    }

    for (&way_id, way) in &extract.ways {
        if let Some(&node_id) = way.node_ids.iter().find(|id| !extract.nodes.contains_key(id)) {
            return Err(OsmError::DanglingNode { way_id, node_id });
        }
    }
    Ok(extract)
}

fn close(extract: &mut OsmExtract, open: Option<Open>) {
    match open {
        Some(Open::Node(id, n)) => {
            extract.nodes.insert(id, n);
        }
        Some(Open::Way(id, w)) => {
            extract.ways.insert(id, w);
        }
        Some(Open::Relation(id, r)) => {
            extract.relations.insert(id, r);
        }
        None => {}
    }
}

fn escape(s: &str) -> String {
    quick_xml::escape::escape(s).into_owned()
}

fn write_tags(out: &mut String, tags: &Tags) {
    for (k, v) in tags {
        let _ = writeln!(out, "    <tag k=\"{}\" v=\"{}\"/>", escape(k), escape(v));
    }
}

/// Serializes an extract as OSM XML (elements in id order).
pub fn write_osm_xml(extract: &OsmExtract) -> String {
    let mut out = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<osm version=\"0.6\" generator=\"trajscene\">\n",
    );
    for (id, n) in &extract.nodes {
        if n.tags.is_empty() {
            let _ = writeln!(out, "  <node id=\"{id}\" lat=\"{}\" lon=\"{}\"/>", n.lat, n.lon);
        } else {
            let _ = writeln!(out, "  <node id=\"{id}\" lat=\"{}\" lon=\"{}\">", n.lat, n.lon);
            write_tags(&mut out, &n.tags);
            out.push_str("  </node>\n");
        }
    }
    for (id, w) in &extract.ways {
        let _ = writeln!(out, "  <way id=\"{id}\">");
        for r in &w.node_ids {
            let _ = writeln!(out, "    <nd ref=\"{r}\"/>");
        }
        write_tags(&mut out, &w.tags);
        out.push_str("  </way>\n");
    }
    for (id, r) in &extract.relations {
        let _ = writeln!(out, "  <relation id=\"{id}\">");
        for m in &r.members {
            let _ = writeln!(
                out,
                "    <member type=\"{}\" ref=\"{}\" role=\"{}\"/>",
                m.kind.as_str(),
                m.ref_id,
                escape(&m.role)
            );
        }
        write_tags(&mut out, &r.tags);
        out.push_str("  </relation>\n");
    }
    out.push_str("</osm>\n");
    out
}
