use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Arc;

use freshrec::batch::run_batch_events;
use freshrec::config::{BatchConfig, ServingConfig};
use freshrec::event_log::{generate_catalog, WatchEvent};
use freshrec::injection::Assignment;
use freshrec::ranking::RankerModel;
use freshrec::realtime::RealtimeStore;
use freshrec::serving::{format_response, http, Recommender};
use freshrec::{ItemId, UserId, DAY_S};

fn recommender() -> Arc<Recommender> {
    let catalog = generate_catalog(60, 4, 3).unwrap();
    let events: Vec<WatchEvent> = (0..400)
        .map(|n| WatchEvent {
            user_id: UserId(n % 20),
            item_id: ItemId((n * 13 + n / 20) % 60),
            timestamp: 100 + n as i64 * 50,
            watch_duration_s: 60,
            completion_fraction: 0.9,
        })
        .collect();
    let batch = run_batch_events(&events, &catalog, DAY_S, &BatchConfig::default()).unwrap();
    let config = ServingConfig::default();
    Arc::new(Recommender::new(
        Arc::new(catalog),
        Arc::new(batch),
        Arc::new(RankerModel::heuristic()),
        Arc::new(RealtimeStore::new(config.store.clone())),
        Arc::new(Assignment::hash_split((0..20).map(UserId), "freshrec", 0.5)),
        config,
    ))
}

fn start(rec: Arc<Recommender>) -> std::net::SocketAddr {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    listener.set_nonblocking(true).unwrap();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            http::serve(listener, rec).await.unwrap();
        });
    });
    addr
}

fn request(addr: std::net::SocketAddr, method: &str, path: &str, body: &str) -> (u16, String) {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut raw = String::new();
    s.read_to_string(&mut raw).unwrap();
    let status = raw[9..12].parse().unwrap();
    let body = raw
        .split_once("\r\n\r\n")
        .map(|(_, b)| b.to_string())
        .unwrap_or_default();
    (status, body)
}

#[test]
fn endpoints_serve_the_in_process_pipeline() {
    let rec = recommender();
    let addr = start(rec.clone());

    assert_eq!(request(addr, "GET", "/health", ""), (200, "ok\n".into()));

    let now = DAY_S + 10;
    let (status, body) = request(addr, "GET", &format!("/recommend?user=4&now={now}&count=5"), "");
    assert_eq!(status, 200);
    let arm = rec.arm_of(UserId(4)).unwrap();
    let direct = rec.serve_arm(UserId(4), arm, now, 5).unwrap();
    assert_eq!(body, format_response(&direct.list, arm));

    let (status, body) = request(addr, "POST", "/event", &format!("4,7,{},120,0.5", DAY_S + 5));
    assert_eq!((status, body.as_str()), (200, "ok seq=1\n"));
    assert!(rec.store().contains(UserId(4), ItemId(7), DAY_S + 6));

    assert_eq!(request(addr, "GET", "/recommend?user=4&now=5", "").0, 400);
    assert_eq!(request(addr, "GET", "/recommend?user=4&now=5&count=0", "").0, 400);
    assert_eq!(request(addr, "GET", "/recommend?user=999&now=5&count=3", "").0, 404);
    assert_eq!(request(addr, "POST", "/event", "not,an,event").0, 400);
    assert_eq!(request(addr, "POST", "/event", "4,7,10,120,1.5").0, 400);
}
